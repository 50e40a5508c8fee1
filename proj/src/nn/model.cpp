#include "sfl/nn/model.hpp"

#include <fstream>
#include <iterator>

#include "sfl/bytes.hpp"
#include "sfl/nn/loss.hpp"

namespace sfl {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

Tensor Model::logits(const Tensor& x, std::size_t chunk) const {
  std::vector<Tensor> parts;
  for (std::size_t begin = 0; begin < x.batch(); begin += chunk) {
    const std::size_t end = std::min(x.batch(), begin + chunk);
    parts.push_back(forward_output<float>(units, params, slice_rows(x, begin, end)));
  }
  return concat_rows<float>(parts);
}

std::vector<int> Model::predict(const Tensor& x, std::size_t chunk) const {
  if (x.batch() == 0) return {};
  return argmax_rows(logits(x, chunk));
}

void Model::validate() const {
  infer_shapes(units, input_shape);
  check_params<float>(units, params);
}

Model make_model(std::vector<UnitSpec> units, Shape input_shape, Rng rng) {
  Model m{std::move(units), {}, std::move(input_shape)};
  infer_shapes(m.units, m.input_shape);
  m.params = init_params(m.units, rng);
  return m;
}

namespace {

constexpr char kMagic[4] = {'S', 'F', 'L', 'X'};

void put_tensor(ByteWriter& w, const Tensor& t) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put_array<float>(t.span());
}

Tensor get_tensor(ByteReader& r) {
  const auto rank = r.get<std::uint8_t>();
  Shape dims(rank);
  for (auto& d : dims) d = r.get<std::uint32_t>();
  Tensor t(dims);
  r.get_array<float>(t.span());
  return t;
}

std::vector<std::int32_t> unit_ints(const UnitSpec& u) {
  switch (u.kind) {
    case UnitKind::Linear: return {u.in, u.out};
    case UnitKind::Conv2d:
    case UnitKind::ConvTranspose2d: return {u.in, u.out, u.kernel, u.stride, u.pad};
    default: return {};
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& m) {
  ByteWriter w;
  for (char c : kMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.input_shape.size()));
  for (auto d : m.input_shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.units.size()));
  for (const auto& u : m.units) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(u.kind));
    const auto ints = unit_ints(u);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ints.size()));
    for (auto v : ints) w.put<std::int32_t>(v);
  }
  const auto tensors = m.params.tensors();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) put_tensor(w, *t);
  return w.take();
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    for (char c : kMagic) {
      if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) throw FormatError("checkpoint: bad magic");
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    Model m;
    m.input_shape.resize(r.get<std::uint8_t>());
    for (auto& d : m.input_shape) d = r.get<std::uint32_t>();
    const auto n_units = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_units; ++i) {
      UnitSpec u;
      const auto tag = r.get<std::uint8_t>();
      if (tag < 1 || tag > 7) throw FormatError("checkpoint: unknown unit tag " + std::to_string(tag));
      u.kind = static_cast<UnitKind>(tag);
      const auto n = r.get<std::uint8_t>();
      std::vector<std::int32_t> ints(n);
      for (auto& v : ints) v = r.get<std::int32_t>();
      if (ints.size() != unit_ints(u).size()) throw FormatError("checkpoint: wrong field count for unit " + std::to_string(i));
      if (ints.size() >= 2) {
        u.in = ints[0];
        u.out = ints[1];
      }
      if (ints.size() == 5) {
        u.kernel = ints[2];
        u.stride = ints[3];
        u.pad = ints[4];
      }
      m.units.push_back(u);
    }
    const auto n_tensors = r.get<std::uint32_t>();
    std::vector<Tensor> tensors;
    for (std::uint32_t i = 0; i < n_tensors; ++i) tensors.push_back(get_tensor(r));
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
    std::size_t next = 0;
    for (const auto& u : m.units) {
      LayerParams<float> lp;
      if (u.has_params()) {
        if (next + 2 > tensors.size()) throw FormatError("checkpoint: missing parameter tensors");
        lp.weight = std::move(tensors[next++]);
        lp.bias = std::move(tensors[next++]);
      }
      m.params.layers.push_back(std::move(lp));
    }
    if (next != tensors.size()) throw FormatError("checkpoint: unexpected extra tensors");
    m.validate();
    return m;
  } catch (const DecodeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& m, const std::string& path) { write_file(path, encode_checkpoint(m)); }

Model load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace sfl
