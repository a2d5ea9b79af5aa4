#pragma once

// Offers, commodities and the small amount of arithmetic every other module
// shares. Quantities are energy per settlement interval (kWh), never power.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coopex/error.hpp"
#include "json.hpp"

namespace coopex {

using Timestamp = std::chrono::sys_seconds;
using Hours = std::chrono::duration<double, std::ratio<3600>>;

inline constexpr double kDefaultDtHours = 0.25;

/// "YYYY-MM-DDTHH:MM:SS" (UTC, no offset suffix).
inline std::string format_iso(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

/// Accepts "YYYY-MM-DDTHH:MM[:SS]" with 'T' or ' ' as separator and an
/// optional trailing 'Z'. Returns nullopt on anything else.
inline std::optional<Timestamp> parse_iso(const std::string& s) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int consumed = 0;
  int n = std::sscanf(s.c_str(), "%4d-%2u-%2u%c%2u:%2u%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (n != 6 || (sep != 'T' && sep != ' ')) return std::nullopt;
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < s.size() && s[pos] == ':') {
    int more = 0;
    if (std::sscanf(s.c_str() + pos, ":%2u%n", &sec, &more) != 1) return std::nullopt;
    pos += static_cast<std::size_t>(more);
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) return std::nullopt;
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

inline std::chrono::seconds to_seconds(double hours) {
  return std::chrono::seconds{std::llround(hours * 3600.0)};
}

/// [x]^+ : the part of a signed energy that flows in the positive direction.
constexpr double positive_part(double x) noexcept { return x > 0.0 ? x : 0.0; }

/// Raw demand minus generation for one interval. Positive means the prosumer
/// needs energy, negative means it has surplus.
constexpr double net_position(double demand_kwh, double pv_kwh) noexcept {
  return demand_kwh - pv_kwh;
}

inline bool valid_efficiency(double eta) noexcept {
  return std::isfinite(eta) && eta > 0.0 && eta <= 1.0;
}

inline void require_efficiency(double eta) {
  if (!valid_efficiency(eta)) {
    throw InvalidEfficiency("round-trip efficiency must lie in (0, 1], got " + std::to_string(eta));
  }
}

/// Energy time series: quantity q[k] is delivered over [t[k], t[k+1]).
/// The final quantity is always zero and closes the series.
class EnergyCommodity {
 public:
  EnergyCommodity(std::vector<double> quantities, std::vector<Timestamp> timestamps)
      : quantities_(std::move(quantities)), timestamps_(std::move(timestamps)) {
    if (quantities_.size() != timestamps_.size()) {
      throw StructuralError("commodity quantities and timestamps differ in length");
    }
    if (quantities_.empty() || quantities_.back() != 0.0) {
      throw StructuralError("commodity series must end with a zero quantity");
    }
    for (double q : quantities_) {
      if (!std::isfinite(q) || q < 0.0) throw StructuralError("commodity quantities must be >= 0");
    }
    for (std::size_t k = 1; k < timestamps_.size(); ++k) {
      if (timestamps_[k] <= timestamps_[k - 1]) {
        throw StructuralError("commodity timestamps must be strictly increasing");
      }
    }
  }

  /// Single-interval commodity: q over [start, start + dt).
  static EnergyCommodity single(double q, Timestamp start, std::chrono::seconds dt) {
    return EnergyCommodity({q, 0.0}, {start, start + dt});
  }

  [[nodiscard]] const std::vector<double>& quantities() const noexcept { return quantities_; }
  [[nodiscard]] const std::vector<Timestamp>& timestamps() const noexcept { return timestamps_; }

  friend bool operator==(const EnergyCommodity&, const EnergyCommodity&) = default;

 private:
  std::vector<double> quantities_;
  std::vector<Timestamp> timestamps_;
};

enum class OfferFlag { ask = 0, bid = 1 };
enum class OrderKind { limit, fill_or_kill };

/// Offer tuple (commodity, price, flag) with the optional extensions. Only
/// commodity, flag and efficiency are read when clearing: every offer is
/// cleared, so price, count, order kind and expiry are carried as inert data.
struct MarketOffer {
  EnergyCommodity commodity;
  OfferFlag flag;
  std::optional<double> price;
  std::optional<int> quantity_count;
  OrderKind order_kind = OrderKind::limit;
  std::optional<Timestamp> expiry;
  std::optional<double> efficiency;  // asks from prosumers only

  [[nodiscard]] bool is_bid() const noexcept { return flag == OfferFlag::bid; }
  [[nodiscard]] double quantity() const { return commodity.quantities().front(); }
  [[nodiscard]] Timestamp interval_start() const { return commodity.timestamps().front(); }

  friend bool operator==(const MarketOffer&, const MarketOffer&) = default;
};

/// Either a prosumer (by index into the scenario population) or the grid.
class MarketRole {
 public:
  static MarketRole prosumer(std::size_t index) { return MarketRole(index); }
  static MarketRole grid() { return MarketRole(std::nullopt); }

  [[nodiscard]] bool is_grid() const noexcept { return !index_.has_value(); }
  [[nodiscard]] std::size_t index() const {
    if (!index_) throw StructuralError("the grid has no prosumer index");
    return *index_;
  }

  friend bool operator==(const MarketRole&, const MarketRole&) = default;

 private:
  explicit MarketRole(std::optional<std::size_t> index) : index_(index) {}
  std::optional<std::size_t> index_;
};

/// Turns a nonzero net position into a bid (net > 0) or an ask carrying the
/// seller's efficiency (net < 0). Zero nets abstain and are rejected here.
inline MarketOffer make_offer(double net_kwh, double efficiency, Timestamp interval,
                              std::chrono::seconds dt = to_seconds(kDefaultDtHours)) {
  if (!std::isfinite(net_kwh)) throw NumericError("offer net position is not finite");
  if (net_kwh == 0.0) throw StructuralError("zero net position: prosumer abstains this interval");
  if (net_kwh > 0.0) {
    return MarketOffer{EnergyCommodity::single(net_kwh, interval, dt), OfferFlag::bid, {}, {},
                       OrderKind::limit, {}, std::nullopt};
  }
  require_efficiency(efficiency);
  return MarketOffer{EnergyCommodity::single(-net_kwh, interval, dt), OfferFlag::ask, {}, {},
                     OrderKind::limit, {}, efficiency};
}

// JSON: {"flag": "bid"|"ask", "q_kwh": number, "t": ISO-8601, "eta": number|null,
//        "price": number|null}
inline void to_json(nlohmann::json& j, const MarketOffer& o) {
  j = nlohmann::json{{"flag", o.is_bid() ? "bid" : "ask"},
                     {"q_kwh", o.quantity()},
                     {"t", format_iso(o.interval_start())},
                     {"eta", nullptr},
                     {"price", nullptr}};
  if (o.efficiency) j["eta"] = *o.efficiency;
  if (o.price) j["price"] = *o.price;
}

inline MarketOffer offer_from_json(const nlohmann::json& j,
                                   std::chrono::seconds dt = to_seconds(kDefaultDtHours)) {
  const auto flag = j.at("flag").get<std::string>();
  if (flag != "bid" && flag != "ask") throw ParseError("offer flag must be \"bid\" or \"ask\"");
  const auto t = parse_iso(j.at("t").get<std::string>());
  if (!t) throw ParseError("offer timestamp is not ISO-8601");
  const double q = j.at("q_kwh").get<double>();
  MarketOffer offer{EnergyCommodity::single(q, *t, dt),
                    flag == "bid" ? OfferFlag::bid : OfferFlag::ask,
                    {}, {}, OrderKind::limit, {}, std::nullopt};
  if (j.contains("price") && !j["price"].is_null()) offer.price = j["price"].get<double>();
  if (j.contains("eta") && !j["eta"].is_null()) {
    if (offer.is_bid()) throw ParseError("bids never carry an efficiency");
    const double eta = j["eta"].get<double>();
    require_efficiency(eta);
    offer.efficiency = eta;
  }
  return offer;
}

}  // namespace coopex
