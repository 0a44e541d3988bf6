#include "mcrc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mcrc/error.hpp"

namespace mcrc {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(TrainConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> m;
    auto size = [&m](const char* k, std::size_t TrainConfig::*f) {
      m[k] = [f](TrainConfig& c, std::string_view key, std::string_view v) {
        c.*f = parse_number<std::size_t>(key, v);
      };
    };
    auto real = [&m](const char* k, double TrainConfig::*f) {
      m[k] = [f](TrainConfig& c, std::string_view key, std::string_view v) { c.*f = parse_number<double>(key, v); };
    };
    auto flag = [&m](const char* k, bool TrainConfig::*f) {
      m[k] = [f](TrainConfig& c, std::string_view key, std::string_view v) { c.*f = parse_bool(key, v); };
    };
    real("lr", &TrainConfig::lr);
    real("clip_norm", &TrainConfig::clip_norm);
    size("batch_size", &TrainConfig::batch_size);
    size("vocab_cap", &TrainConfig::vocab_cap);
    size("embed_dim", &TrainConfig::embed_dim);
    size("hidden", &TrainConfig::hidden);
    real("dropout", &TrainConfig::dropout);
    size("max_epochs", &TrainConfig::max_epochs);
    size("selection_epochs", &TrainConfig::selection_epochs);
    size("patience", &TrainConfig::patience);
    m["seed"] = [](TrainConfig& c, std::string_view key, std::string_view v) {
      c.seed = parse_number<std::uint64_t>(key, v);
    };
    flag("finetune_embeddings", &TrainConfig::finetune_embeddings);
    flag("train_option_encoder", &TrainConfig::train_option_encoder);
    m["stage_one"] = [](TrainConfig& c, std::string_view key, std::string_view v) {
      if (v == "joint") {
        c.stage_one = StageOneMode::kJoint;
      } else if (v == "separate") {
        c.stage_one = StageOneMode::kSeparate;
      } else {
        throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key) + " (joint|separate)");
      }
    };
    real("span_loss_weight", &TrainConfig::span_loss_weight);
    size("max_span", &TrainConfig::max_span);
    size("max_answer", &TrainConfig::max_answer);
    size("char_dim", &TrainConfig::char_dim);
    size("char_hidden", &TrainConfig::char_hidden);
    m["option_pooling"] = [](TrainConfig& c, std::string_view key, std::string_view v) {
      if (v == "final") {
        c.option_pooling = OptionPooling::kFinalState;
      } else if (v == "mean") {
        c.option_pooling = OptionPooling::kMean;
      } else {
        throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key) + " (final|mean)");
      }
    };
    real("beta1", &TrainConfig::beta1);
    real("beta2", &TrainConfig::beta2);
    real("eps", &TrainConfig::eps);
    size("workers", &TrainConfig::workers);
    return m;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid config: ") + what);
  };
  need(lr > 0, "lr must be positive");
  need(clip_norm > 0, "clip_norm must be positive");
  need(batch_size > 0, "batch_size must be positive");
  need(vocab_cap > 0, "vocab_cap must be positive");
  need(embed_dim > 0, "embed_dim must be positive");
  need(hidden > 0, "hidden must be positive");
  need(dropout >= 0 && dropout < 1, "dropout must lie in [0, 1)");
  need(max_epochs > 0, "max_epochs must be positive");
  need(selection_epochs > 0, "selection_epochs must be positive");
  need(patience > 0, "patience must be positive");
  need(span_loss_weight >= 0, "span_loss_weight must be non-negative");
  need(max_span > 0, "max_span must be positive");
  need(max_answer > 0, "max_answer must be positive");
  need(char_dim > 0 && char_hidden > 0, "character dimensions must be positive");
  need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas must lie in [0, 1)");
  need(eps > 0, "eps must be positive");
  need(workers > 0, "workers must be positive");
}

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.embed_dim = embed_dim;
  m.char_dim = char_dim;
  m.char_hidden = char_hidden;
  m.hidden = hidden;
  m.max_span = max_span;
  m.max_answer = max_answer;
  m.option_pooling = option_pooling;
  m.finetune_embeddings = finetune_embeddings;
  return m;
}

AdamOptions TrainConfig::adam() const { return AdamOptions{lr, beta1, beta2, eps}; }

void apply_setting(TrainConfig& config, std::string_view key, std::string_view value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(config, key, value);
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "lr=" << fmt(c.lr) << '\n'
    << "clip_norm=" << fmt(c.clip_norm) << '\n'
    << "batch_size=" << c.batch_size << '\n'
    << "vocab_cap=" << c.vocab_cap << '\n'
    << "embed_dim=" << c.embed_dim << '\n'
    << "hidden=" << c.hidden << '\n'
    << "dropout=" << fmt(c.dropout) << '\n'
    << "max_epochs=" << c.max_epochs << '\n'
    << "selection_epochs=" << c.selection_epochs << '\n'
    << "patience=" << c.patience << '\n'
    << "seed=" << c.seed << '\n'
    << "finetune_embeddings=" << (c.finetune_embeddings ? "true" : "false") << '\n'
    << "train_option_encoder=" << (c.train_option_encoder ? "true" : "false") << '\n'
    << "stage_one=" << (c.stage_one == StageOneMode::kJoint ? "joint" : "separate") << '\n'
    << "span_loss_weight=" << fmt(c.span_loss_weight) << '\n'
    << "max_span=" << c.max_span << '\n'
    << "max_answer=" << c.max_answer << '\n'
    << "char_dim=" << c.char_dim << '\n'
    << "char_hidden=" << c.char_hidden << '\n'
    << "option_pooling=" << (c.option_pooling == OptionPooling::kMean ? "mean" : "final") << '\n'
    << "beta1=" << fmt(c.beta1) << '\n'
    << "beta2=" << fmt(c.beta2) << '\n'
    << "eps=" << fmt(c.eps) << '\n'
    << "workers=" << c.workers << '\n';
  return o.str();
}

}  // namespace mcrc
