#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "shufflerl/cli/config.hpp"
#include "shufflerl/market_data.hpp"

namespace shufflerl::cli {

// A dataset archive is a directory holding prices.csv, fundamentals.csv (one
// row per day and ticker, already aligned) and metadata.json with the ticker
// list, date range and fingerprint.

inline constexpr std::string_view kPricesFile = "prices.csv";
inline constexpr std::string_view kFundamentalsFile = "fundamentals.csv";
inline constexpr std::string_view kMetadataFile = "metadata.json";

std::string sha256_hex(std::string_view bytes);

/// SHA-256 over the normalized prices and fundamentals CSV text.
std::string dataset_fingerprint(const MarketDataset& dataset);

struct LoadedDataset {
  std::shared_ptr<const MarketDataset> dataset;
  std::string fingerprint;
};

/// Writes the archive and returns its fingerprint. Existing archive files in
/// `dir` are replaced.
std::string write_archive(const std::filesystem::path& dir, const MarketDataset& dataset);

/// Throws DataError if the files are missing or disagree with the recorded
/// fingerprint.
LoadedDataset read_archive(const std::filesystem::path& dir);

/// Materializes a configured source (generating or ingesting as needed).
LoadedDataset load_source(const DatasetSource& source);

enum class Split { train, test };

Split split_from_string(std::string_view name);
std::string_view to_string(Split split);

/// Applies the source's split_date, or else its train_fraction.
std::pair<MarketDataset, MarketDataset> split_dataset(const MarketDataset& dataset,
                                                      const DatasetSource& source);

}  // namespace shufflerl::cli
