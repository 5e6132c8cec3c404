#include "shufflerl/cli/archive.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "shufflerl/errors.hpp"

namespace shufflerl::cli {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

namespace {

std::string prices_text(const MarketDataset& dataset) {
  std::ostringstream out;
  write_prices_csv(dataset, out);
  return out.str();
}

std::string fundamentals_text(const MarketDataset& dataset) {
  std::ostringstream out;
  write_fundamentals_csv(dataset, out);
  return out.str();
}

std::string fingerprint_of(const std::string& prices, const std::string& fundamentals) {
  return sha256_hex(prices + fundamentals);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

}  // namespace

std::string dataset_fingerprint(const MarketDataset& dataset) {
  return fingerprint_of(prices_text(dataset), fundamentals_text(dataset));
}

std::string write_archive(const std::filesystem::path& dir, const MarketDataset& dataset) {
  std::filesystem::create_directories(dir);
  const auto prices = prices_text(dataset);
  const auto fundamentals = fundamentals_text(dataset);
  const auto fingerprint = fingerprint_of(prices, fundamentals);
  write_file(dir / kPricesFile, prices);
  write_file(dir / kFundamentalsFile, fundamentals);
  const nlohmann::json meta = {{"format", "shufflerl-dataset"},
                               {"version", 1},
                               {"tickers", dataset.tickers()},
                               {"days", dataset.day_count()},
                               {"first_date", dataset.days().front().to_string()},
                               {"last_date", dataset.days().back().to_string()},
                               {"fingerprint", fingerprint}};
  write_file(dir / kMetadataFile, meta.dump(2) + "\n");
  return fingerprint;
}

LoadedDataset read_archive(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / kMetadataFile);
  if (!meta_in)
    throw DataError(fmt::format("{}: not a dataset archive (missing {})", dir.string(),
                                kMetadataFile));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", (dir / kMetadataFile).string(), e.what()));
  }

  auto dataset = std::make_shared<const MarketDataset>(align_forward_fill(
      load_prices(dir / kPricesFile), load_fundamentals(dir / kFundamentalsFile)));
  auto fingerprint = dataset_fingerprint(*dataset);
  const auto recorded = meta.value("fingerprint", std::string{});
  if (recorded != fingerprint)
    throw DataError(fmt::format("{}: fingerprint mismatch (metadata {}, contents {})",
                                dir.string(), recorded, fingerprint));
  return {std::move(dataset), std::move(fingerprint)};
}

LoadedDataset load_source(const DatasetSource& source) {
  std::shared_ptr<const MarketDataset> dataset;
  switch (source.kind) {
    case DatasetKind::synthetic:
      if (source.synthetic.tickers == 0)
        throw ConfigError("dataset.synthetic.tickers must be at least 1");
      dataset = std::make_shared<const MarketDataset>(generate_synthetic_market(source.synthetic));
      break;
    case DatasetKind::files:
      dataset = std::make_shared<const MarketDataset>(
          align_forward_fill(load_prices(source.prices), load_fundamentals(source.fundamentals)));
      break;
    case DatasetKind::archive:
      return read_archive(source.archive);
  }
  auto fingerprint = dataset_fingerprint(*dataset);
  return {std::move(dataset), std::move(fingerprint)};
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError(fmt::format("unknown split '{}' (train|test)", name));
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::pair<MarketDataset, MarketDataset> split_dataset(const MarketDataset& dataset,
                                                      const DatasetSource& source) {
  if (source.split_date) return split_by_date(dataset, *source.split_date);
  const auto n = dataset.day_count();
  const auto cut = static_cast<std::size_t>(source.train_fraction * static_cast<double>(n));
  if (cut == 0 || cut >= n)
    throw DataError(fmt::format("train_fraction {} leaves an empty split of {} days",
                                source.train_fraction, n));
  return {dataset.slice(0, cut), dataset.slice(cut, n)};
}

}  // namespace shufflerl::cli
