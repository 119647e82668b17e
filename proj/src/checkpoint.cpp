#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "clie/error.hpp"
#include "clie/model.hpp"

namespace clie::model {

namespace {

constexpr const char* kMagic = "clie-checkpoint";

void write_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (char& b : bytes) {
    b = static_cast<char>(bits & 0xff);
    bits >>= 8;
  }
  os.write(bytes, 8);
}

double read_le(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw ValidationError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  return std::bit_cast<double>(bits);
}

std::string read_line(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("checkpoint: truncated header");
  return line;
}

template <typename T>
T read_field(std::istream& is, const std::string& key) {
  std::istringstream ss(read_line(is));
  std::string got;
  T value{};
  if (!(ss >> got >> value) || got != key) throw ValidationError("checkpoint: expected header field '" + key + "'");
  return value;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ModelParams& params, std::uint64_t vocab_fingerprint) {
  const auto& d = params.dims();
  os << kMagic << ' ' << kCheckpointVersion << '\n';
  os << "hidden " << d.hidden << '\n';
  os << "embed " << d.embed << '\n';
  os << "source_vocab " << d.source_vocab << '\n';
  os << "target_vocab " << d.target_vocab << '\n';
  os << "vocab_fingerprint " << std::hex << std::setw(16) << std::setfill('0') << vocab_fingerprint << std::dec
     << '\n';
  os << "params " << params.named().size() << '\n';
  for (const auto& p : params.named()) {
    const auto& s = p.var->value().shape();
    os << p.name << ' ' << s.rank();
    for (std::size_t a = 0; a < s.rank(); ++a) os << ' ' << s[a];
    os << '\n';
  }
  os << "end\n";
  for (const auto& p : params.named()) {
    for (double v : p.var->value().data()) write_le(os, v);
  }
}

ModelParams load_checkpoint(std::istream& is, std::uint64_t expected_fingerprint) {
  {
    std::istringstream ss(read_line(is));
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != kMagic) throw ValidationError("checkpoint: bad magic");
    if (version != kCheckpointVersion) {
      throw ValidationError("checkpoint: unsupported format version " + std::to_string(version));
    }
  }
  ModelDims dims;
  dims.hidden = read_field<std::size_t>(is, "hidden");
  dims.embed = read_field<std::size_t>(is, "embed");
  dims.source_vocab = read_field<std::size_t>(is, "source_vocab");
  dims.target_vocab = read_field<std::size_t>(is, "target_vocab");
  {
    std::istringstream ss(read_line(is));
    std::string key;
    std::uint64_t fp = 0;
    if (!(ss >> key >> std::hex >> fp) || key != "vocab_fingerprint") {
      throw ValidationError("checkpoint: expected header field 'vocab_fingerprint'");
    }
    if (fp != expected_fingerprint) throw ValidationError("checkpoint: vocabulary fingerprint mismatch");
  }
  ModelParams params(dims);
  const auto count = read_field<std::size_t>(is, "params");
  if (count != params.named().size()) throw ValidationError("checkpoint: unexpected parameter count");
  for (const auto& p : params.named()) {
    std::istringstream ss(read_line(is));
    std::string name;
    std::size_t rank = 0;
    ss >> name >> rank;
    const auto& s = p.var->value().shape();
    bool ok = name == p.name && rank == s.rank();
    for (std::size_t a = 0; ok && a < rank; ++a) {
      std::size_t dim = 0;
      ok = static_cast<bool>(ss >> dim) && dim == s[a];
    }
    if (!ok) throw ValidationError("checkpoint: parameter '" + p.name + "' missing or misshapen");
  }
  if (read_line(is) != "end") throw ValidationError("checkpoint: missing header terminator");
  for (const auto& p : params.named()) {
    for (double& v : p.var->mutable_value().data()) v = read_le(is);
  }
  return params;
}

void save_model(const std::filesystem::path& path, const ModelParams& params, const corpus::TaggedVocabulary& vocab) {
  if (params.dims().target_vocab != vocab.target_size() || params.dims().source_vocab != vocab.source_size()) {
    throw ValidationError("save_model: parameters do not match the vocabulary");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  save_checkpoint(out, params, vocab.fingerprint());
  auto vocab_path = path;
  vocab_path += ".vocab";
  std::ofstream vout(vocab_path, std::ios::binary);
  if (!vout) throw IoError("cannot write vocabulary " + vocab_path.string());
  vocab.save(vout);
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto vocab_path = path;
  vocab_path += ".vocab";
  std::ifstream vin(vocab_path);
  if (!vin) throw IoError("cannot open vocabulary " + vocab_path.string());
  auto vocab = corpus::TaggedVocabulary::load(vin);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  auto params = load_checkpoint(in, vocab.fingerprint());
  return {std::move(vocab), std::move(params)};
}

}  // namespace clie::model
