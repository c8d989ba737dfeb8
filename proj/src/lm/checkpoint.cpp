#include "dprobe/lm/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dprobe/errors.hpp"
#include "json.hpp"

namespace dprobe::lm {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'R', 'B'};
constexpr std::size_t kPrefixBytes = 4 + 4 + 8;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>, std::uint64_t, T>>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t offset) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string build_header(const ModelCheckpoint& c) {
  const auto& cfg = c.model.config();
  std::ostringstream h;
  h << "format=dprobe-checkpoint\n";
  h << "config.layers=" << cfg.layers << '\n';
  h << "config.heads=" << cfg.heads << '\n';
  h << "config.width=" << cfg.width << '\n';
  h << "config.context_length=" << cfg.context_length << '\n';
  h << "config.dropout_rate=" << format_double(cfg.dropout_rate) << '\n';
  h << "config.vocab_size=" << cfg.vocab_size << '\n';
  h << "vocab=" << nlohmann::json(c.vocab.symbols()).dump() << '\n';
  h << "provenance.corpus=" << nlohmann::json(c.provenance.corpus).dump() << '\n';
  h << "provenance.seed=" << c.provenance.seed << '\n';
  h << "provenance.steps=" << c.provenance.steps << '\n';
  h << "provenance.notes=" << nlohmann::json(c.provenance.notes).dump() << '\n';
  h << "params=" << c.model.parameters().size() << '\n';
  for (const auto& p : c.model.parameters()) {
    h << "param=" << p.name << ' ';
    for (std::size_t i = 0; i < p.value.rank(); ++i) h << (i ? "," : "") << p.value.shape()[i];
    h << '\n';
  }
  return h.str();
}

struct ParsedHeader {
  ModelConfig config;
  std::vector<std::string> vocab;
  TrainingProvenance provenance;
  std::vector<std::pair<std::string, numerics::Shape>> params;
};

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw CheckpointHeaderError("header field " + key + " has non-integer value \"" + value + "\"");
  }
  return v;
}

ParsedHeader parse_header(std::string_view text) {
  ParsedHeader out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool saw_format = false;
  std::size_t declared_params = 0;
  try {
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CheckpointHeaderError("malformed header line \"" + line + "\"");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "format") {
        if (value != "dprobe-checkpoint") throw CheckpointHeaderError("unknown format \"" + value + "\"");
        saw_format = true;
      } else if (key == "config.layers") {
        out.config.layers = parse_count(key, value);
      } else if (key == "config.heads") {
        out.config.heads = parse_count(key, value);
      } else if (key == "config.width") {
        out.config.width = parse_count(key, value);
      } else if (key == "config.context_length") {
        out.config.context_length = parse_count(key, value);
      } else if (key == "config.dropout_rate") {
        out.config.dropout_rate = std::stod(value);
      } else if (key == "config.vocab_size") {
        out.config.vocab_size = parse_count(key, value);
      } else if (key == "vocab") {
        out.vocab = nlohmann::json::parse(value).get<std::vector<std::string>>();
      } else if (key == "provenance.corpus") {
        out.provenance.corpus = nlohmann::json::parse(value).get<std::string>();
      } else if (key == "provenance.seed") {
        out.provenance.seed = std::stoull(value);
      } else if (key == "provenance.steps") {
        out.provenance.steps = parse_count(key, value);
      } else if (key == "provenance.notes") {
        out.provenance.notes = nlohmann::json::parse(value).get<std::string>();
      } else if (key == "params") {
        declared_params = parse_count(key, value);
      } else if (key == "param") {
        const auto space = value.find(' ');
        if (space == std::string::npos) throw CheckpointHeaderError("malformed param line \"" + line + "\"");
        numerics::Shape shape;
        std::istringstream dims(value.substr(space + 1));
        std::string d;
        while (std::getline(dims, d, ',')) shape.push_back(parse_count(key, d));
        out.params.emplace_back(value.substr(0, space), std::move(shape));
      } else {
        throw CheckpointHeaderError("unknown header field \"" + key + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointHeaderError(std::string("bad JSON value in header: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw CheckpointHeaderError("bad numeric value in header");
  } catch (const std::out_of_range&) {
    throw CheckpointHeaderError("numeric value out of range in header");
  }
  if (!saw_format) throw CheckpointHeaderError("header lacks format line");
  if (declared_params != out.params.size()) throw CheckpointHeaderError("parameter count does not match header");
  return out;
}

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& c) {
  const std::string header = build_header(c);
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, c.format_version);
  put_le<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& p : c.model.parameters()) {
    for (double v : p.value.data()) put_le<double>(out, v);
  }
  put_le<std::uint64_t>(out, fnv1a(out));
  return out;
}

ModelCheckpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic) throw CheckpointTruncatedError("checkpoint shorter than its magic number");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointHeaderError("not a DPRB checkpoint");
  if (bytes.size() < kPrefixBytes) throw CheckpointTruncatedError("checkpoint truncated inside its prefix");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointFormatVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) + ", this build reads " +
                                 std::to_string(kCheckpointFormatVersion));
  }
  const auto header_size = get_le<std::uint64_t>(bytes, 8);
  if (header_size > bytes.size() - kPrefixBytes) throw CheckpointTruncatedError("checkpoint truncated inside header");
  const auto parsed = parse_header(bytes.substr(kPrefixBytes, header_size));

  std::size_t payload_values = 0;
  for (const auto& [name, shape] : parsed.params) payload_values += numerics::element_count(shape);
  const std::size_t payload_offset = kPrefixBytes + header_size;
  const std::size_t expected_size = payload_offset + payload_values * 8 + 8;
  if (bytes.size() < expected_size) {
    throw CheckpointTruncatedError("checkpoint has " + std::to_string(bytes.size()) + " bytes, header implies " +
                                   std::to_string(expected_size));
  }
  if (bytes.size() > expected_size) throw CheckpointHeaderError("trailing bytes after checkpoint checksum");
  const auto stored = get_le<std::uint64_t>(bytes, expected_size - 8);
  if (stored != fnv1a(bytes.substr(0, expected_size - 8))) {
    throw CheckpointIntegrityError("checkpoint checksum mismatch");
  }

  std::vector<numerics::Parameter> params;
  std::size_t offset = payload_offset;
  for (const auto& [name, shape] : parsed.params) {
    numerics::Tensor t(shape);
    for (auto& v : t.data()) {
      v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
      offset += 8;
    }
    params.push_back({name, std::move(t), {}});
  }
  try {
    Vocab vocab(parsed.vocab);
    if (vocab.size() != parsed.config.vocab_size) throw CheckpointHeaderError("vocab size disagrees with config");
    return ModelCheckpoint{Transformer(parsed.config, std::move(params)), std::move(vocab), parsed.provenance,
                           version};
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointHeaderError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelCheckpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace dprobe::lm
