#include "cmxqe/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cmxqe/error.hpp"
#include "cmxqe/io.hpp"

namespace cmxqe {

namespace {

constexpr char kClsvMagic[4] = {'C', 'L', 'S', 'V'};

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::optional<Context> parse_context(std::string_view s) {
  if (s == "en") return Context::En;
  if (s == "hi") return Context::Hi;
  return std::nullopt;
}

// Decodes one UTF-8 code point starting at `i`; malformed bytes decode as
// themselves with length 1 so tokenization never fails.
std::pair<char32_t, std::size_t> decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
    }
  }
  return {b0, 1};
}

// White_Space property of the Unicode character database.
bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

std::uint64_t fnv1a(std::uint64_t seed, char tag, std::string_view token) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001B3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((seed >> (8 * i)) & 0xFF));
  mix(static_cast<unsigned char>(tag));
  for (const char c : token) mix(static_cast<unsigned char>(c));
  return h;
}

void check_finite(std::string_view key, std::span<const float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::NonFiniteInput,
                  "vector '" + std::string(key) + "' has a non-finite value at " + std::to_string(i));
    }
  }
}

}  // namespace

std::string_view to_string(Context context) { return context == Context::En ? "en" : "hi"; }

EmbeddingKey EmbeddingKey::synthetic(std::string record_id, Context context) {
  return EmbeddingKey{Source::Syn, std::move(record_id), context, std::nullopt};
}

EmbeddingKey EmbeddingKey::human(std::string pair_id, std::uint32_t index, Context context) {
  return EmbeddingKey{Source::Hum, std::move(pair_id), context, index};
}

std::string EmbeddingKey::render() const {
  std::string out = source == Source::Syn ? "syn:" : "hum:";
  out += owner_id;
  out += ':';
  if (source == Source::Hum) {
    out += std::to_string(human_index.value_or(0));
    out += ':';
  }
  out += to_string(context);
  return out;
}

std::optional<EmbeddingKey> EmbeddingKey::parse(std::string_view text) {
  if (text.size() < 4) return std::nullopt;
  const auto prefix = text.substr(0, 4);
  auto rest = text.substr(4);
  const auto ctx_sep = rest.rfind(':');
  if (ctx_sep == std::string_view::npos) return std::nullopt;
  const auto context = parse_context(rest.substr(ctx_sep + 1));
  if (!context) return std::nullopt;
  rest = rest.substr(0, ctx_sep);
  if (prefix == "syn:") {
    if (rest.empty()) return std::nullopt;
    return synthetic(std::string(rest), *context);
  }
  if (prefix == "hum:") {
    const auto idx_sep = rest.rfind(':');
    if (idx_sep == std::string_view::npos || idx_sep == 0) return std::nullopt;
    const auto digits = rest.substr(idx_sep + 1);
    if (!all_digits(digits)) return std::nullopt;
    std::uint32_t index = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec != std::errc{}) return std::nullopt;
    // Canonical rendering has no leading zeros.
    if (std::to_string(index) != digits) return std::nullopt;
    return human(std::string(rest.substr(0, idx_sep)), index, *context);
  }
  return std::nullopt;
}

void EmbeddingStore::insert(std::string key, std::vector<float> values) {
  if (values.size() != dim_) {
    throw Error(ErrorKind::DimMismatch, "vector '" + key + "' has " + std::to_string(values.size()) +
                                            " values, store dim is " + std::to_string(dim_));
  }
  check_finite(key, values);
  const auto [it, inserted] = entries_.try_emplace(key, std::move(values));
  if (!inserted) throw Error(ErrorKind::DuplicateKey, "key '" + key + "' already present");
}

const std::vector<float>* EmbeddingStore::find(std::string_view key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::span<const float> EmbeddingStore::at(std::string_view key) const {
  const auto* values = find(key);
  if (values == nullptr) throw Error(ErrorKind::MissingKey, "key '" + std::string(key) + "' not in store");
  return *values;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dim_ != b.dim_ || a.entries_.size() != b.entries_.size()) return false;
  auto ia = a.entries_.begin();
  auto ib = b.entries_.begin();
  for (; ia != a.entries_.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (std::memcmp(ia->second.data(), ib->second.data(), ia->second.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

std::string encode_clsv(const EmbeddingStore& store) {
  io::ByteWriter out;
  std::size_t total = kClsvHeaderBytes;
  for (const auto& [key, values] : store.entries()) total += 2 + key.size() + 4 * values.size();
  out.reserve(total);
  out.put_bytes(std::string_view(kClsvMagic, 4));
  out.put_u32(kClsvVersion);
  out.put_u32(store.dim());
  out.put_u64(store.size());
  for (const auto& [key, values] : store.entries()) {
    if (key.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorKind::InvalidArgument, "key longer than 65535 bytes");
    }
    out.put_u16(static_cast<std::uint16_t>(key.size()));
    out.put_bytes(key);
    for (const float v : values) out.put_f32(v);
  }
  return out.take();
}

EmbeddingStore decode_clsv(std::string_view bytes, std::optional<std::uint32_t> expected_dim) {
  if (bytes.size() < 4 && std::string_view(kClsvMagic, 4).starts_with(bytes)) {
    throw Error(ErrorKind::TruncatedFile, std::to_string(bytes.size()) + " bytes, shorter than the CLSV magic");
  }
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kClsvMagic, 4) != 0) {
    throw Error(ErrorKind::BadMagic, "missing CLSV magic");
  }
  io::ByteReader in(bytes.substr(4));
  const auto version = in.get_u32();
  if (version != kClsvVersion) {
    throw Error(ErrorKind::VersionMismatch, "CLSV version " + std::to_string(version) + ", expected " +
                                                std::to_string(kClsvVersion));
  }
  const auto dim = in.get_u32();
  if (expected_dim && dim != *expected_dim) {
    throw Error(ErrorKind::DimMismatch,
                "expected dim " + std::to_string(*expected_dim) + ", found " + std::to_string(dim));
  }
  const auto count = in.get_u64();
  EmbeddingStore store(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto key_len = in.get_u16();
    std::string key(in.get_bytes(key_len));
    std::vector<float> values(dim);
    for (auto& v : values) v = in.get_f32();
    store.insert(std::move(key), std::move(values));
  }
  if (in.remaining() != 0) {
    throw Error(ErrorKind::TruncatedFile, std::to_string(in.remaining()) +
                                              " trailing bytes after the declared record count");
  }
  return store;
}

EmbeddingStore read_clsv(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  try {
    return decode_clsv(io::read_file(path), expected_dim);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnreadableFile) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_clsv(const EmbeddingStore& store, const std::filesystem::path& path) {
  io::write_file(path, encode_clsv(store));
}

EmbeddingStore read_jsonl(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  const std::string text = io::read_file(path);
  std::optional<EmbeddingStore> store;
  if (expected_dim) store.emplace(*expected_dim);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    auto malformed = [&](const std::string& why) {
      return Error(ErrorKind::MalformedLine, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw malformed("not a JSON object");
    const auto key = obj.find("key");
    const auto values = obj.find("values");
    if (key == obj.end() || !key->is_string()) throw malformed("missing string \"key\"");
    if (values == obj.end() || !values->is_array()) throw malformed("missing array \"values\"");
    std::vector<float> vec;
    vec.reserve(values->size());
    for (const auto& v : *values) {
      if (!v.is_number()) throw malformed("non-numeric value");
      vec.push_back(static_cast<float>(v.get<double>()));
    }
    if (!store) store.emplace(static_cast<std::uint32_t>(vec.size()));
    if (vec.size() != store->dim()) {
      throw malformed("expected " + std::to_string(store->dim()) + " values, found " +
                      std::to_string(vec.size()));
    }
    store->insert(key->get<std::string>(), std::move(vec));
  }
  if (!store) store.emplace(kClsDim);
  return std::move(*store);
}

void write_jsonl(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::string out;
  char buf[64];
  for (const auto& [key, values] : store.entries()) {
    out += "{\"key\":";
    out += nlohmann::json(key).dump();
    out += ",\"values\":[";
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0) out.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof(buf), values[i]);
      out.append(buf, res.ptr);
    }
    out += "]}\n";
  }
  io::write_file(path, out);
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < sentence.size();) {
    const auto [cp, len] = decode_utf8(sentence, i);
    if (is_unicode_space(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (len == 1) {
      const char c = sentence[i];
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    } else {
      current.append(sentence.substr(i, len));
    }
    i += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

EmbeddingVector deterministic_embed(std::string_view sentence_a, std::string_view sentence_b,
                                    const EmbeddingKey& key, std::uint64_t seed) {
  const auto tokens_a = tokenize(sentence_a);
  const auto tokens_b = tokenize(sentence_b);
  if (tokens_b.empty()) {
    throw Error(ErrorKind::EmptySentence, "sentence B is empty for '" + key.render() + "'");
  }

  std::vector<double> sum(kClsDim, 0.0);
  auto accumulate = [&](const std::vector<std::string>& tokens, char tag) {
    for (const auto& token : tokens) {
      std::uint64_t state = fnv1a(seed, tag, token);
      for (auto& s : sum) s += 2.0 * unit_interval(splitmix64(state)) - 1.0;
    }
  };
  accumulate(tokens_a, 'a');
  accumulate(tokens_b, 'b');

  double norm_sq = 0.0;
  for (const double s : sum) norm_sq += s * s;
  const double norm = std::sqrt(norm_sq);
  if (!(norm > 0.0)) {
    throw Error(ErrorKind::NonFiniteInput, "degenerate token sum for '" + key.render() + "'");
  }
  EmbeddingVector out{key, std::vector<float>(kClsDim)};
  for (std::size_t i = 0; i < kClsDim; ++i) out.values[i] = static_cast<float>(sum[i] / norm);
  return out;
}

EmbeddingStore select_embeddings(const EmbeddingStore& source, std::span<const EmbeddingRequest> requests) {
  if (source.dim() != kClsDim) {
    throw Error(ErrorKind::DimMismatch,
                "expected dim " + std::to_string(kClsDim) + ", found " + std::to_string(source.dim()));
  }
  std::vector<std::string> missing;
  EmbeddingStore out(source.dim());
  for (const auto& request : requests) {
    auto rendered = request.key.render();
    const auto* values = source.find(rendered);
    if (values == nullptr) {
      missing.push_back(std::move(rendered));
      continue;
    }
    out.insert(std::move(rendered), *values);
  }
  if (!missing.empty()) {
    std::string message = std::to_string(missing.size()) + " requested key(s) absent:";
    for (const auto& k : missing) message += " " + k;
    throw Error(ErrorKind::MissingKey, message);
  }
  return out;
}

EmbeddingStore provide_embeddings(const Provider& provider, std::span<const EmbeddingRequest> requests) {
  if (const auto* file = std::get_if<FileProvider>(&provider)) {
    return select_embeddings(read_clsv(file->path, kClsDim), requests);
  }
  const auto seed = std::get<DeterministicProvider>(provider).seed;
  EmbeddingStore out(kClsDim);
  for (const auto& request : requests) {
    auto vec = deterministic_embed(request.sentence_a, request.sentence_b, request.key, seed);
    out.insert(vec.key, std::move(vec.values));
  }
  return out;
}

}  // namespace cmxqe
