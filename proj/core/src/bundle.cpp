#include "mcrc/bundle.hpp"

#include <fstream>
#include <sstream>

#include "mcrc/checkpoint.hpp"
#include "mcrc/error.hpp"

namespace mcrc {
namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw CheckpointError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + path.string());
  f << text;
  if (!f) throw CheckpointError("failed writing " + path.string());
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

void save_model(const ReaderModel& model, const TrainConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.txt", format_config(config));

  std::string vocab;
  for (const auto& t : model.vocabulary().tokens()) vocab += t + '\n';
  write_text(dir / "vocab.txt", vocab);

  std::string chars;
  for (unsigned char c : model.char_vocabulary().bytes()) chars += std::to_string(c) + '\n';
  write_text(dir / "chars.txt", chars);

  save_checkpoint(model.synthesis_parameters(), dir / "synthesis.ckpt");
  std::vector<const Parameter*> selection;
  for (const Parameter* p : model.parameters().all()) {
    if (p->name.rfind(kSelectionPrefix, 0) == 0) selection.push_back(p);
  }
  save_checkpoint(selection, dir / "selection.ckpt");
}

LoadedModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("no model directory at " + dir.string());
  LoadedModel out;
  try {
    out.config = parse_config(read_text(dir / "config.txt"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad model config: ") + e.what());
  }

  Vocabulary vocab = Vocabulary::from_tokens(lines(read_text(dir / "vocab.txt")));
  std::vector<unsigned char> bytes;
  for (const auto& line : lines(read_text(dir / "chars.txt"))) {
    int v = -1;
    try {
      v = std::stoi(line);
    } catch (const std::exception&) {
    }
    if (v < 0 || v > 255) throw CheckpointError("bad byte '" + line + "' in chars.txt");
    bytes.push_back(static_cast<unsigned char>(v));
  }
  CharVocabulary chars = CharVocabulary::from_bytes(std::move(bytes));

  out.model = std::make_unique<ReaderModel>(out.config.model(), std::move(vocab), std::move(chars), nullptr,
                                            out.config.seed);
  load_checkpoint(out.model->synthesis_parameters(), dir / "synthesis.ckpt");
  load_checkpoint(out.model->selection_parameters(), dir / "selection.ckpt");
  return out;
}

}  // namespace mcrc
