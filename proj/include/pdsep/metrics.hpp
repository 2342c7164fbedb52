#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdsep/dataset.hpp"

namespace pdsep {

class PDualGanModel;
struct SeparateOptions;

/// PSNR reported when the two arrays are identical.
inline constexpr double kPsnrSentinelDb = 99.0;

double mse(std::span<const double> m, std::span<const double> h);
double mse(std::span<const float> m, std::span<const float> h);

/// 10*log10(max_value^2 / MSE), or the sentinel when MSE is zero.
double psnr(std::span<const double> m, std::span<const double> h, double max_value);
double psnr(std::span<const float> m, std::span<const float> h, double max_value);

/// Pearson correlation in 64-bit. Throws NumericError for a constant input.
double correlation(std::span<const double> x, std::span<const double> y);
double correlation(std::span<const float> x, std::span<const float> y);

struct MetricsEntry {
  std::size_t record = 0;
  std::size_t source = 0;
  double psnr_db = 0.0;
  double corr = 0.0;
  double baseline_corr = 0.0;  // correlation(mixture, source)
};

struct MetricsReport {
  std::size_t records = 0;
  std::size_t sources = 0;
  std::vector<MetricsEntry> entries;  // record-major
  std::vector<double> mean_psnr;      // per source, sentinel entries excluded
  std::vector<double> mean_corr;
  std::vector<double> mean_baseline_corr;
  std::vector<std::size_t> sentinel_count;  // per source
  double grand_psnr = 0.0;
  double grand_corr = 0.0;
  double grand_baseline_corr = 0.0;
  std::size_t grand_sentinels = 0;
};

enum class Pairing { FixedIndex, BestPermutation };

/// Scores estimates[r][i] against record r's source i. PSNR is taken after
/// mapping both arrays from [-1,1] to [0,1], with MAX = 1. The permutation
/// mode is a diagnostic that picks, per record, the source assignment with
/// the highest mean correlation.
MetricsReport evaluate(std::span<const std::vector<std::vector<float>>> estimates, const Dataset& dataset,
                       Pairing pairing = Pairing::FixedIndex);

/// Separates every record with `model` and scores it.
MetricsReport evaluate(const PDualGanModel& model, const Dataset& dataset, const SeparateOptions& options,
                       Pairing pairing = Pairing::FixedIndex);

/// Columns record,source,psnr_db,corr,baseline_corr followed by one
/// `mean` row per source and an `all` row.
std::string report_csv(const MetricsReport& report);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace pdsep
