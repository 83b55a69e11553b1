#include "evadekit/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "evadekit/error.hpp"

namespace evadekit {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are not supported");

namespace {

constexpr char kMagic[4] = {'E', 'V', 'K', '1'};

enum class LayerKind : std::uint8_t { dense = 1, conv2d = 2, relu = 3, flatten = 4 };

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void u32(std::size_t v) { put(static_cast<std::uint32_t>(v)); }
  void doubles(const std::vector<double>& v) {
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t u32(const char* field) { return get<std::uint32_t>(field); }
  std::vector<double> doubles(std::size_t n, const char* field) {
    need(n * sizeof(double), field);
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("model file truncated at byte " + std::to_string(pos_) + " while reading " +
                        field + " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(bytes_.size() - pos_) + ")");
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_model(const Model& model, std::ostream& os) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kModelFormatVersion);
  w.u32(model.num_classes());
  w.u32(model.input_shape().size());
  for (auto d : model.input_shape()) w.u32(d);
  w.u32(model.layers().size());
  for (const auto& layer : model.layers()) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      w.put(LayerKind::dense);
      w.u32(d->in);
      w.u32(d->out);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      w.put(LayerKind::conv2d);
      w.u32(c->kh);
      w.u32(c->kw);
      w.u32(c->cin);
      w.u32(c->cout);
      w.u32(c->stride);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      w.put(LayerKind::relu);
    } else {
      w.put(LayerKind::flatten);
    }
  }
  for (const auto& layer : model.layers()) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      w.doubles(d->weights);
      w.doubles(d->bias);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      w.doubles(c->weights);
      w.doubles(c->bias);
    }
  }
  w.put(fnv1a(w.bytes()));
  os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!os) throw FormatError("failed writing model stream");
}

Model read_model(std::istream& is) {
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r(bytes);
  char magic[4];
  for (char& m : magic) m = r.get<char>("magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a model file: bad magic bytes");
  const auto version = r.u32("version");
  if (version != kModelFormatVersion) {
    throw VersionError("model file version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  const auto k = r.u32("num_classes");
  const auto rank = r.u32("input rank");
  if (rank == 0 || rank > 8) throw FormatError("implausible input rank " + std::to_string(rank));
  Shape input(rank);
  for (auto& d : input) d = r.u32("input dims");
  const auto n_layers = r.u32("layer count");
  if (n_layers > 4096) throw FormatError("implausible layer count " + std::to_string(n_layers));
  std::vector<Layer> layers;
  layers.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto kind = r.get<std::uint8_t>("layer kind");
    switch (static_cast<LayerKind>(kind)) {
      case LayerKind::dense: {
        DenseLayer d;
        d.in = r.u32("dense.in");
        d.out = r.u32("dense.out");
        layers.emplace_back(std::move(d));
        break;
      }
      case LayerKind::conv2d: {
        Conv2dLayer c;
        c.kh = r.u32("conv.kh");
        c.kw = r.u32("conv.kw");
        c.cin = r.u32("conv.cin");
        c.cout = r.u32("conv.cout");
        c.stride = r.u32("conv.stride");
        layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::relu: layers.emplace_back(ReluLayer{}); break;
      case LayerKind::flatten: layers.emplace_back(FlattenLayer{}); break;
      default:
        throw FormatError("unknown layer kind " + std::to_string(kind) + " at layer " +
                          std::to_string(i));
    }
  }
  for (auto& layer : layers) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      d->weights = r.doubles(d->in * d->out, "dense weights");
      d->bias = r.doubles(d->out, "dense bias");
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      c->weights = r.doubles(c->kh * c->kw * c->cin * c->cout, "conv weights");
      c->bias = r.doubles(c->cout, "conv bias");
    }
  }
  const std::size_t payload = r.pos();
  const auto stored = r.get<std::uint64_t>("checksum");
  if (r.remaining() != 0) {
    throw FormatError("model file has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  if (stored != fnv1a(bytes.substr(0, payload))) throw FormatError("model file checksum mismatch");
  try {
    return Model(std::move(input), std::move(layers), k);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("model file describes an invalid network: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  write_model(model, os);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open model file '" + path + "'");
  return read_model(is);
}

}  // namespace evadekit
