#include "pdsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pdsep/binary_io.hpp"
#include "pdsep/error.hpp"
#include "pdsep/trainer.hpp"

namespace pdsep {

namespace {

template <typename T>
void check_pair(const char* who, std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size())
    throw InvalidArgument(std::string(who) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  if (a.empty()) throw InvalidArgument(std::string(who) + ": empty input");
}

template <typename T>
double mse_impl(std::span<const T> m, std::span<const T> h) {
  check_pair("mse", m, h);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = static_cast<double>(m[i]) - static_cast<double>(h[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(m.size());
}

template <typename T>
double psnr_impl(std::span<const T> m, std::span<const T> h, double max_value) {
  if (!(max_value > 0.0)) throw InvalidArgument("psnr: peak value must be positive");
  const double e = mse_impl(m, h);
  if (e == 0.0) return kPsnrSentinelDb;
  return 10.0 * std::log10(max_value * max_value / e);
}

template <typename T>
double corr_impl(std::span<const T> x, std::span<const T> y) {
  check_pair("correlation", x, y);
  if (x.size() < 2) throw InvalidArgument("correlation: need at least two samples");
  auto constant = [](std::span<const T> v) { return std::all_of(v.begin(), v.end(), [&](T e) { return e == v[0]; }); };
  if (constant(x) || constant(y)) throw NumericError("correlation: undefined for a constant signal");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation: undefined for a constant signal");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

// [-1,1] -> [0,1]
std::vector<double> unit_range(std::span<const float> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (static_cast<double>(v[i]) + 1.0) / 2.0;
  return out;
}

}  // namespace

double mse(std::span<const double> m, std::span<const double> h) { return mse_impl(m, h); }
double mse(std::span<const float> m, std::span<const float> h) { return mse_impl(m, h); }
double psnr(std::span<const double> m, std::span<const double> h, double max_value) { return psnr_impl(m, h, max_value); }
double psnr(std::span<const float> m, std::span<const float> h, double max_value) { return psnr_impl(m, h, max_value); }
double correlation(std::span<const double> x, std::span<const double> y) { return corr_impl(x, y); }
double correlation(std::span<const float> x, std::span<const float> y) { return corr_impl(x, y); }

MetricsReport evaluate(std::span<const std::vector<std::vector<float>>> estimates, const Dataset& dataset,
                       Pairing pairing) {
  const std::size_t n = dataset.manifest.sources;
  if (estimates.size() != dataset.records.size())
    throw InvalidArgument("evaluate: " + std::to_string(estimates.size()) + " estimate sets for " +
                          std::to_string(dataset.records.size()) + " records");
  MetricsReport rep;
  rep.records = dataset.records.size();
  rep.sources = n;
  rep.mean_psnr.assign(n, 0.0);
  rep.mean_corr.assign(n, 0.0);
  rep.mean_baseline_corr.assign(n, 0.0);
  rep.sentinel_count.assign(n, 0);

  for (std::size_t r = 0; r < dataset.records.size(); ++r) {
    const auto& rec = dataset.records[r];
    const auto& est = estimates[r];
    if (est.size() != n)
      throw InvalidArgument("evaluate: record " + std::to_string(r) + " has " + std::to_string(est.size()) +
                            " estimates, expected " + std::to_string(n));
    std::vector<std::size_t> assign(n);
    std::iota(assign.begin(), assign.end(), std::size_t{0});
    if (pairing == Pairing::BestPermutation) {
      std::vector<std::size_t> perm = assign;
      double best = -std::numeric_limits<double>::infinity();
      do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += correlation(std::span<const float>(est[perm[i]]), rec.sources[i]);
        if (total > best) {
          best = total;
          assign = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = est[assign[i]];
      MetricsEntry m;
      m.record = r;
      m.source = i;
      m.psnr_db = psnr(std::span<const double>(unit_range(e)), std::span<const double>(unit_range(rec.sources[i])), 1.0);
      m.corr = correlation(std::span<const float>(e), std::span<const float>(rec.sources[i]));
      m.baseline_corr = correlation(std::span<const float>(rec.mixture), std::span<const float>(rec.sources[i]));
      rep.entries.push_back(m);
    }
  }

  std::vector<std::size_t> psnr_count(n, 0);
  double psnr_total = 0.0;
  std::size_t psnr_n = 0;
  for (const auto& m : rep.entries) {
    rep.mean_corr[m.source] += m.corr;
    rep.mean_baseline_corr[m.source] += m.baseline_corr;
    if (m.psnr_db == kPsnrSentinelDb) {
      ++rep.sentinel_count[m.source];
      ++rep.grand_sentinels;
    } else {
      rep.mean_psnr[m.source] += m.psnr_db;
      ++psnr_count[m.source];
      psnr_total += m.psnr_db;
      ++psnr_n;
    }
  }
  const double recs = static_cast<double>(rep.records);
  double corr_total = 0.0, base_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    corr_total += rep.mean_corr[i];
    base_total += rep.mean_baseline_corr[i];
    rep.mean_corr[i] /= recs;
    rep.mean_baseline_corr[i] /= recs;
    rep.mean_psnr[i] = psnr_count[i] ? rep.mean_psnr[i] / static_cast<double>(psnr_count[i]) : kPsnrSentinelDb;
  }
  const double cells = static_cast<double>(rep.entries.size());
  rep.grand_corr = corr_total / cells;
  rep.grand_baseline_corr = base_total / cells;
  rep.grand_psnr = psnr_n ? psnr_total / static_cast<double>(psnr_n) : kPsnrSentinelDb;
  return rep;
}

MetricsReport evaluate(const PDualGanModel& model, const Dataset& dataset, const SeparateOptions& options,
                       Pairing pairing) {
  if (dataset.manifest.sources != model.size())
    throw InvalidArgument("evaluate: dataset has " + std::to_string(dataset.manifest.sources) + " sources, model has " +
                          std::to_string(model.size()));
  std::vector<std::vector<std::vector<float>>> estimates;
  estimates.reserve(dataset.records.size());
  for (std::size_t r = 0; r < dataset.records.size(); ++r) {
    SeparateOptions opt = options;
    opt.seed = derive_seed(options.seed, r);
    estimates.push_back(separate(model, dataset.records[r].mixture, opt));
  }
  return evaluate(estimates, dataset, pairing);
}

std::string report_csv(const MetricsReport& rep) {
  std::ostringstream os;
  os.precision(9);
  os << "record,source,psnr_db,corr,baseline_corr\n";
  for (const auto& m : rep.entries)
    os << m.record << ',' << m.source << ',' << m.psnr_db << ',' << m.corr << ',' << m.baseline_corr << '\n';
  for (std::size_t i = 0; i < rep.sources; ++i)
    os << "mean," << i << ',' << rep.mean_psnr[i] << ',' << rep.mean_corr[i] << ',' << rep.mean_baseline_corr[i] << '\n';
  os << "mean,all," << rep.grand_psnr << ',' << rep.grand_corr << ',' << rep.grand_baseline_corr << '\n';
  return os.str();
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  io::write_text_file(path, report_csv(report));
}

}  // namespace pdsep
