#include "mcrc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mcrc/error.hpp"

namespace mcrc {
namespace {

using nlohmann::json;

const std::array<std::string, Vocabulary::kReserved> kReservedTokens = {"<pad>", "<unk>", "<bos>", "<eos>"};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

const json& field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) throw MalformedRecord(std::string("missing field \"") + name + "\"");
  return *it;
}

std::string string_of(const json& j, const std::string& what) {
  if (!j.is_string()) throw MalformedRecord(what + " must be a string");
  return j.get<std::string>();
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

RaceDocument parse_race_document(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw MalformedRecord(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw MalformedRecord("document must be a JSON object");

  RaceDocument out;
  out.article = string_of(field(doc, "article"), "article");
  out.id = string_of(field(doc, "id"), "id");

  const json& questions = field(doc, "questions");
  const json& options = field(doc, "options");
  const json& answers = field(doc, "answers");
  if (!questions.is_array() || !options.is_array() || !answers.is_array()) {
    throw MalformedRecord("questions, options and answers must be lists");
  }
  if (questions.size() != options.size() || questions.size() != answers.size()) {
    throw MalformedRecord("questions, options and answers differ in length");
  }
  for (std::size_t q = 0; q < questions.size(); ++q) {
    out.questions.push_back(string_of(questions[q], "question"));
    const json& opts = options[q];
    if (!opts.is_array() || opts.size() != kNumOptions) {
      throw MalformedRecord("question " + std::to_string(q) + " must have exactly 4 options");
    }
    std::array<std::string, kNumOptions> four;
    for (std::size_t i = 0; i < kNumOptions; ++i) four[i] = string_of(opts[i], "option");
    out.options.push_back(std::move(four));
    out.answers.push_back(string_of(answers[q], "answer"));
  }
  return out;
}

std::string serialize_race_document(const RaceDocument& doc) {
  json j;
  j["answers"] = doc.answers;
  j["options"] = json::array();
  for (const auto& four : doc.options) j["options"].push_back(std::vector<std::string>(four.begin(), four.end()));
  j["questions"] = doc.questions;
  j["article"] = doc.article;
  j["id"] = doc.id;
  return j.dump();
}

std::vector<Instance> to_instances(const RaceDocument& doc, const std::string& subset) {
  Tokens passage = tokenize(doc.article);
  if (passage.empty()) throw MalformedRecord("empty article in " + doc.id);
  std::vector<Instance> out;
  for (std::size_t q = 0; q < doc.questions.size(); ++q) {
    const std::string& answer = doc.answers.at(q);
    if (answer.size() != 1 || answer[0] < 'A' || answer[0] > 'D') {
      throw MalformedRecord("invalid answer \"" + answer + "\" in " + doc.id);
    }
    Instance inst;
    inst.id = doc.id;
    inst.question_index = q;
    inst.subset = subset;
    inst.passage = passage;
    inst.question = tokenize(doc.questions[q]);
    if (inst.question.empty()) throw MalformedRecord("empty question in " + doc.id);
    for (std::size_t i = 0; i < kNumOptions; ++i) {
      inst.options[i] = tokenize(doc.options[q][i]);
      if (inst.options[i].empty()) {
        throw MalformedRecord("empty option " + std::to_string(i) + " in " + doc.id);
      }
    }
    inst.gold = static_cast<std::size_t>(answer[0] - 'A');
    inst.style = doc.questions[q].find('_') != std::string::npos ? QuestionStyle::kCloze
                                                                 : QuestionStyle::kInterrogative;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> parse_race_record(std::string_view json_text, const std::string& subset) {
  return to_instances(parse_race_document(json_text), subset);
}

std::vector<Instance> load_race_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Instance> out;
  for (const auto& file : files) {
    const fs::path rel = fs::relative(file.parent_path(), dir);
    const std::string subset = rel == "." ? "" : rel.filename().string();
    try {
      auto insts = parse_race_record(read_file(file), subset);
      std::move(insts.begin(), insts.end(), std::back_inserter(out));
    } catch (const MalformedRecord& e) {
      throw MalformedRecord(file.string() + ": " + e.what());
    }
  }
  return out;
}

Vocabulary Vocabulary::build(std::span<const Tokens> streams, std::size_t cap) {
  if (cap == 0) throw ConfigError("vocabulary cap must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const Tokens& s : streams) {
    for (const std::string& tok : s) ++counts[tok];
  }
  for (const auto& r : kReservedTokens) counts.erase(r);
  if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic; a stable sort on count keeps it as the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);

  std::vector<std::string> tokens(kReservedTokens.begin(), kReservedTokens.end());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved || !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens.begin())) {
    throw DataError("vocabulary must start with the reserved tokens");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second) throw DataError("duplicate vocabulary token " + v.tokens_[i]);
  }
  return v;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

TokenIds Vocabulary::encode(std::span<const std::string> tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(lookup(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

CharVocabulary CharVocabulary::build(const Vocabulary& words) {
  std::set<unsigned char> seen;
  for (const auto& w : words.tokens()) {
    for (char c : w) seen.insert(static_cast<unsigned char>(c));
  }
  return from_bytes(std::vector<unsigned char>(seen.begin(), seen.end()));
}

CharVocabulary CharVocabulary::from_bytes(std::vector<unsigned char> bytes) {
  CharVocabulary v;
  v.index_.fill(kUnk);
  v.bytes_ = std::move(bytes);
  for (std::size_t i = 0; i < v.bytes_.size(); ++i) v.index_[v.bytes_[i]] = i + 2;
  return v;
}

std::size_t CharVocabulary::lookup(unsigned char c) const { return index_[c]; }

TokenIds CharVocabulary::encode(std::string_view word) const {
  TokenIds ids;
  ids.reserve(word.size());
  for (char c : word) ids.push_back(lookup(static_cast<unsigned char>(c)));
  return ids;
}

double EmbeddingTable::coverage() const noexcept {
  if (pretrained.empty()) return 0.0;
  const auto n = std::count(pretrained.begin(), pretrained.end(), true);
  return static_cast<double>(n) / static_cast<double>(pretrained.size());
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingTable table;
  table.vectors = Tensor({vocab.size(), dim});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (double& v : table.vectors.values()) v = dist(rng);
  table.pretrained.assign(vocab.size(), false);
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t dim, std::uint64_t seed, bool trainable) {
  EmbeddingTable table = random_embeddings(vocab, dim, seed);
  table.trainable = trainable;
  std::ifstream f(path);
  if (!f) throw DataError("cannot read embeddings " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> row;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    row.clear();
    std::string value;
    while (fields >> value) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number \"" + value + "\"");
      }
      row.push_back(v);
    }
    if (row.size() != dim) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim + 1) +
                      " fields, got " + std::to_string(row.size() + 1));
    }
    const std::size_t id = vocab.lookup(token);
    if (id == Vocabulary::kUnk && token != "<unk>") continue;
    if (table.pretrained[id]) continue;
    std::copy(row.begin(), row.end(), table.vectors.row(id).begin());
    table.pretrained[id] = true;
  }
  return table;
}

IndexedInstance index_instance(const Instance& inst, const Vocabulary& vocab) {
  IndexedInstance out;
  out.passage = vocab.encode(inst.passage);
  out.question = vocab.encode(inst.question);
  for (std::size_t i = 0; i < kNumOptions; ++i) out.options[i] = vocab.encode(inst.options[i]);
  out.gold = inst.gold;
  return out;
}

std::vector<double> SequenceBatch::step_mask(std::size_t t) const {
  std::vector<double> m(batch);
  for (std::size_t b = 0; b < batch; ++b) m[b] = mask.at(b, t);
  return m;
}

SequenceBatch pad_sequences(std::span<const TokenIds> sequences) {
  if (sequences.empty()) throw ShapeError("cannot pad an empty list of sequences");
  SequenceBatch out;
  out.batch = sequences.size();
  for (const auto& s : sequences) {
    if (s.empty()) throw ShapeError("cannot pad an empty sequence");
    out.steps = std::max(out.steps, s.size());
    out.lengths.push_back(s.size());
  }
  out.ids.assign(out.steps * out.batch, Vocabulary::kPad);
  out.mask = Tensor({out.batch, out.steps});
  for (std::size_t b = 0; b < out.batch; ++b) {
    for (std::size_t t = 0; t < sequences[b].size(); ++t) {
      out.ids[t * out.batch + b] = sequences[b][t];
      out.mask.at(b, t) = 1.0;
    }
  }
  return out;
}

Batch make_batch(std::span<const IndexedInstance> instances, std::span<const std::size_t> indices) {
  Batch batch;
  batch.indices.assign(indices.begin(), indices.end());
  std::vector<TokenIds> passages, questions, options(kNumOptions * indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const IndexedInstance& inst = instances[indices[b]];
    passages.push_back(inst.passage);
    questions.push_back(inst.question);
    for (std::size_t i = 0; i < kNumOptions; ++i) options[i * indices.size() + b] = inst.options[i];
    batch.gold.push_back(inst.gold);
  }
  batch.passage = pad_sequences(passages);
  batch.question = pad_sequences(questions);
  batch.options = pad_sequences(options);
  return batch;
}

std::vector<Batch> make_batches(std::span<const IndexedInstance> instances, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    out.push_back(make_batch(instances, std::span(order).subspan(start, n)));
  }
  return out;
}

namespace {

const std::vector<std::string> kToyNouns = {
    "dog",  "cat",  "bird", "fish", "car",  "ball", "hat",  "book", "cup",  "kite", "lamp",
    "boat", "tree", "door", "shoe", "box",  "bike", "coat", "desk", "drum", "fork", "frog",
    "horse", "key", "leaf", "moon", "pen",  "ring", "sock", "star", "train", "vase"};

const std::vector<std::string> kToyColors = {"red",    "blue",  "green", "yellow", "black", "white",
                                             "pink",   "purple", "orange", "brown", "gray",  "gold",
                                             "silver", "violet", "cyan",  "beige"};

template <typename T>
std::vector<T> sample(const std::vector<T>& pool, std::size_t k, std::mt19937_64& rng) {
  std::vector<T> copy = pool;
  std::shuffle(copy.begin(), copy.end(), rng);
  copy.resize(k);
  return copy;
}

}  // namespace

std::vector<RaceDocument> generate_toy_corpus(std::size_t num_passages, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> fact_count(3, 6);
  std::vector<RaceDocument> docs;
  docs.reserve(num_passages);
  for (std::size_t n = 0; n < num_passages; ++n) {
    const std::size_t k = fact_count(rng);
    const auto nouns = sample(kToyNouns, k, rng);
    const auto colors = sample(kToyColors, k, rng);
    RaceDocument doc;
    doc.id = "toy-" + std::to_string(seed) + "-" + std::to_string(n);
    for (std::size_t f = 0; f < k; ++f) {
      if (f) doc.article += ' ';
      doc.article += "The " + nouns[f] + " is " + colors[f] + ".";
    }
    std::vector<std::size_t> asked(k);
    std::iota(asked.begin(), asked.end(), std::size_t{0});
    std::shuffle(asked.begin(), asked.end(), rng);
    for (std::size_t f : asked) {
      doc.questions.push_back("What color is the " + nouns[f] + "?");
      std::vector<std::string> others;
      for (const auto& c : kToyColors) {
        if (c != colors[f]) others.push_back(c);
      }
      auto distractors = sample(others, kNumOptions - 1, rng);
      const std::size_t gold = std::uniform_int_distribution<std::size_t>(0, kNumOptions - 1)(rng);
      std::array<std::string, kNumOptions> four;
      for (std::size_t i = 0, d = 0; i < kNumOptions; ++i) four[i] = i == gold ? colors[f] : distractors[d++];
      doc.options.push_back(four);
      doc.answers.push_back(std::string(1, static_cast<char>('A' + gold)));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_toy_corpus(const std::filesystem::path& dir, const std::vector<RaceDocument>& docs,
                      double dev_fraction, double test_fraction) {
  namespace fs = std::filesystem;
  if (dev_fraction < 0 || test_fraction < 0 || dev_fraction + test_fraction > 1) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  const auto n = docs.size();
  const auto n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(n) + 0.5);
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n) + 0.5);
  const std::size_t n_train = n - std::min(n, n_dev + n_test);
  for (std::size_t i = 0; i < n; ++i) {
    const char* split = i < n_train ? "train" : (i < n_train + n_dev ? "dev" : "test");
    const fs::path out = dir / split / "toy";
    fs::create_directories(out);
    std::ofstream f(out / (docs[i].id + ".json"));
    if (!f) throw DataError("cannot write into " + out.string());
    f << serialize_race_document(docs[i]) << '\n';
  }
}

}  // namespace mcrc
