#include "dtopo/wire.hpp"

#include "dtopo/errors.hpp"

namespace dtopo {

namespace {

std::uint64_t take(std::span<const std::uint64_t> w, std::size_t& at) {
  if (at >= w.size()) throw FormatError("hull record truncated");
  return w[at++];
}

}  // namespace

void append_hull(std::vector<std::uint64_t>& w, const GridHull& g) {
  w.push_back(encode_uid(g.uid));
  w.push_back(static_cast<std::uint64_t>(g.depth));
  w.push_back(static_cast<std::uint64_t>(g.pos.x));
  w.push_back(static_cast<std::uint64_t>(g.pos.y));
  w.push_back(static_cast<std::uint64_t>(g.pos.z));
  std::uint64_t flags = g.parent ? 1u : 0u;
  for (int d = 0; d < kFaces; ++d) {
    if (g.neighbors[static_cast<std::size_t>(d)]) flags |= std::uint64_t{1} << (8 + d);
  }
  w.push_back(flags);
  w.push_back(g.parent ? encode_uid(*g.parent) : 0);
  for (const auto& n : g.neighbors) w.push_back(n ? encode_uid(*n) : 0);

  const std::size_t slots = g.children.size();
  w.push_back(slots);
  std::vector<std::uint64_t> mask((slots + 63) / 64, 0);
  for (std::size_t s = 0; s < slots; ++s) {
    if (g.children[s]) mask[s / 64] |= std::uint64_t{1} << (s % 64);
  }
  w.insert(w.end(), mask.begin(), mask.end());
  for (const auto& c : g.children) w.push_back(c ? encode_uid(*c) : 0);

  w.push_back(g.payload.size());
  const std::size_t words = (g.payload.size() + 7) / 8;
  for (std::size_t i = 0; i < words; ++i) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < 8 && i * 8 + b < g.payload.size(); ++b) {
      v |= std::uint64_t{std::to_integer<std::uint8_t>(g.payload[i * 8 + b])} << (8 * b);
    }
    w.push_back(v);
  }
}

GridHull read_hull(std::span<const std::uint64_t> w, std::size_t& at) {
  GridHull g;
  g.uid = decode_uid(take(w, at));
  g.depth = static_cast<int>(take(w, at));
  g.pos.x = static_cast<std::int64_t>(take(w, at));
  g.pos.y = static_cast<std::int64_t>(take(w, at));
  g.pos.z = static_cast<std::int64_t>(take(w, at));
  const std::uint64_t flags = take(w, at);
  const std::uint64_t parent = take(w, at);
  if (flags & 1u) g.parent = decode_uid(parent);
  for (int d = 0; d < kFaces; ++d) {
    const std::uint64_t n = take(w, at);
    if (flags & (std::uint64_t{1} << (8 + d))) g.neighbors[static_cast<std::size_t>(d)] = decode_uid(n);
  }
  const std::uint64_t slots = take(w, at);
  if (slots > 512) throw FormatError("hull record claims more than 512 child slots");
  std::vector<std::uint64_t> mask((slots + 63) / 64);
  for (auto& m : mask) m = take(w, at);
  g.children.resize(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    const std::uint64_t c = take(w, at);
    if (mask[s / 64] & (std::uint64_t{1} << (s % 64))) g.children[s] = decode_uid(c);
  }
  const std::uint64_t len = take(w, at);
  if (len > (w.size() - at) * 8) throw FormatError("hull payload truncated");
  g.payload.resize(len);
  for (std::size_t i = 0; i < (len + 7) / 8; ++i) {
    const std::uint64_t v = take(w, at);
    for (std::size_t b = 0; b < 8 && i * 8 + b < len; ++b) g.payload[i * 8 + b] = static_cast<std::byte>((v >> (8 * b)) & 0xFF);
  }
  return g;
}

Bytes serialize_hulls(std::span<const GridHull> hulls) {
  std::vector<std::uint64_t> w;
  w.push_back(hulls.size());
  for (const auto& g : hulls) append_hull(w, g);
  return pack_words(w);
}

std::vector<GridHull> deserialize_hulls(std::span<const std::byte> bytes) {
  const auto w = unpack_words(bytes);
  std::size_t at = 0;
  const std::uint64_t n = take(w, at);
  std::vector<GridHull> out;
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(read_hull(w, at));
  if (at != w.size()) throw FormatError("trailing words after hull records");
  return out;
}

}  // namespace dtopo
