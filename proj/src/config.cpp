#include "sparsedoc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

namespace {

struct Default {
  const char* key;
  const char* value;
};

// Registration order is print order.
constexpr Default kDefaults[] = {
    {"run.seed", "42"},
    {"run.threads", "1"},
    {"task.name", "task"},
    {"task.classes", "current,past,never"},
    {"task.default_label", "never"},
    {"task.vocab", ""},
    {"task.language", "en"},
    {"task.stopwords", ""},
    {"task.abbreviations", ""},
    {"encoder.mode", "builtin"},
    {"encoder.dim", "64"},
    {"encoder.layers", "2"},
    {"encoder.heads", "4"},
    {"encoder.max_len", "128"},
    {"encoder.ffn_mult", "4"},
    {"encoder.min_token_freq", "2"},
    {"encoder.embeddings", ""},
    {"train.learning_rate", "2e-05"},
    {"train.batch_size", "4"},
    {"train.patience", "5"},
    {"train.label_smoothing", "0.1"},
    {"train.relevance_weight", "auto"},
    {"train.max_epochs", "50"},
    {"train.beta1", "0.9"},
    {"train.beta2", "0.999"},
    {"train.eps", "1e-08"},
    {"train.weight_decay", "0.01"},
    {"train.val_fraction", "0.2"},
    {"crossval.k", "5"},
    {"baseline.learning_rate", "0.1"},
    {"baseline.iterations", "500"},
    {"baseline.l2", "0.0001"},
    {"synth.num_documents", "500"},
    {"synth.sentences_per_document", "40"},
    {"synth.relevant_per_document", "1"},
    {"synth.distractor_rate", "0.3"},
    {"synth.class_proportions", ""},
    {"synth.noise_lexicon_size", "300"},
    {"synth.side_term_rate", "0.3"},
    {"synth.critical_term_share", "0.5"},
    {"synth.unmentioned_rate", "0"},
    {"annotate.host", "127.0.0.1"},
    {"annotate.port", "8377"},
};

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

}  // namespace

RunConfig::RunConfig() {
  for (const auto& d : kDefaults) {
    values_[d.key] = d.value;
    order_.emplace_back(d.key);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected section.key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read config file " + path.string());
  std::string line;
  std::string section;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(path.string(), number, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), number, "expected key = value");
    if (section.empty()) throw ParseError(path.string(), number, "key outside of a section");
    const std::string key = section + "." + trim(t.substr(0, eq));
    if (!values_.count(key)) throw ParseError(path.string(), number, "unknown config key '" + key + "'");
    values_[key] = trim(t.substr(eq + 1));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t RunConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = lowercase(get(key));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& part : split(get(key), ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string RunConfig::print() const {
  std::ostringstream out;
  std::string section;
  for (const auto& key : order_) {
    const std::string s = section_of(key);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << key.substr(s.size() + 1) << " = " << values_.at(key) << '\n';
  }
  return out.str();
}

std::string RunConfig::hash() const { return hex16(fnv1a64(print())); }

std::vector<std::string> RunConfig::classes() const {
  auto c = get_list("task.classes");
  if (c.size() < 2) throw ValidationError("task.classes needs at least two classes");
  return c;
}

std::string RunConfig::default_label() const {
  const auto c = classes();
  const std::string& d = get("task.default_label");
  if (std::find(c.begin(), c.end(), d) == c.end()) {
    throw ValidationError("task.default_label '" + d + "' is not one of task.classes");
  }
  return d;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig c;
  c.dim = get_size("encoder.dim");
  c.layers = get_size("encoder.layers");
  c.heads = get_size("encoder.heads");
  c.max_len = get_size("encoder.max_len");
  c.ffn_mult = get_size("encoder.ffn_mult");
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config(bool have_annotations) const {
  TrainConfig c;
  c.learning_rate = get_double("train.learning_rate");
  c.batch_size = get_size("train.batch_size");
  c.patience = get_size("train.patience");
  c.label_smoothing = get_double("train.label_smoothing");
  c.relevance_weight =
      get("train.relevance_weight") == "auto" ? (have_annotations ? 1.0 : 0.0) : get_double("train.relevance_weight");
  c.max_epochs = get_size("train.max_epochs");
  c.seed = get_u64("run.seed");
  c.beta1 = get_double("train.beta1");
  c.beta2 = get_double("train.beta2");
  c.eps = get_double("train.eps");
  c.weight_decay = get_double("train.weight_decay");
  c.val_fraction = get_double("train.val_fraction");
  c.validate();
  return c;
}

LROptions RunConfig::baseline_options() const {
  LROptions o;
  o.learning_rate = get_double("baseline.learning_rate");
  o.iterations = get_size("baseline.iterations");
  o.l2 = get_double("baseline.l2");
  return o;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s;
  s.num_documents = get_size("synth.num_documents");
  s.sentences_per_document = get_size("synth.sentences_per_document");
  s.relevant_per_document = get_size("synth.relevant_per_document");
  s.distractor_rate = get_double("synth.distractor_rate");
  s.classes = classes();
  s.default_label = default_label();
  for (const auto& p : get_list("synth.class_proportions")) {
    try {
      s.class_proportions.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw ValidationError("synth.class_proportions expects numbers, got '" + p + "'");
    }
  }
  s.noise_lexicon_size = get_size("synth.noise_lexicon_size");
  s.side_term_rate = get_double("synth.side_term_rate");
  s.critical_term_share = get_double("synth.critical_term_share");
  s.unmentioned_rate = get_double("synth.unmentioned_rate");
  s.seed = get_u64("run.seed");
  s.validate();
  return s;
}

std::filesystem::path data_path(const std::string& relative) {
  const char* env = std::getenv("SPARSEDOC_DATA");
  return std::filesystem::path(env && *env ? env : SPARSEDOC_DATA_DIR) / relative;
}

}  // namespace sparsedoc
