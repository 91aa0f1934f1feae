#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsedoc/baseline.hpp"
#include "sparsedoc/encoder.hpp"
#include "sparsedoc/model.hpp"
#include "sparsedoc/synth.hpp"
#include "sparsedoc/train.hpp"

namespace sparsedoc {

/// Settings merged from defaults, an optional config file and command-line
/// overrides. The file format is
///
///   # comment
///   [section]
///   key = value
///
/// Every key must be one of the registered defaults; anything else is
/// rejected. Values are kept as strings and converted on access.
class RunConfig {
 public:
  RunConfig();

  /// Applies a config file on top of the current values.
  void load_file(const std::filesystem::path& path);
  /// Applies "section.key=value".
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  /// Canonical text form; loading it back reproduces the same config.
  std::string print() const;
  /// hex16(FNV-1a) of print().
  std::string hash() const;

  std::vector<std::string> classes() const;
  std::string default_label() const;
  EncoderConfig encoder_config() const;
  /// `relevance_weight = auto` resolves to 1 when annotations are supplied
  /// and 0 otherwise.
  TrainConfig train_config(bool have_annotations) const;
  LROptions baseline_options() const;
  SynthConfig synth_config() const;

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

/// Path inside the bundled data directory.
std::filesystem::path data_path(const std::string& relative);

}  // namespace sparsedoc
