#include "nest/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include <nlohmann/json.hpp>

#include "nest/errors.hpp"
#include "nest/io.hpp"

namespace nest {

namespace {

constexpr std::string_view kMagic{"NESTCKPT\x01", 9};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string pack_floats(std::span<const float> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (float f : values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

std::vector<float> unpack_floats(std::string_view bytes, std::size_t count) {
  if (bytes.size() != count * 4) throw ConsistencyError("float section has the wrong length");
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::string pack_bits(std::span<const std::uint8_t> mask) {
  std::string out((mask.size() + 7) / 8, '\0');
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i / 8] = static_cast<char>(static_cast<unsigned char>(out[i / 8]) | (1u << (i % 8)));
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(std::string_view bytes, std::size_t count) {
  if (bytes.size() != (count + 7) / 8) throw ConsistencyError("mask section has the wrong length");
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = (static_cast<unsigned char>(bytes[i / 8]) >> (i % 8)) & 1u;
  return out;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw LengthError("checkpoint is truncated");
    std::string_view v(bytes_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  std::uint64_t u64() {
    const auto v = take(8);
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= std::uint64_t(static_cast<unsigned char>(v[i])) << (8 * i);
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model<float>& model) {
  using nlohmann::json;
  json header;
  header["input"] = {model.input.channels, model.input.height, model.input.width};
  header["seed"] = model.seed;
  header["rng"] = model.rng.state();
  header["bn_epsilon"] = model.bn_epsilon;
  header["bn_momentum"] = model.bn_momentum;
  std::vector<std::pair<std::string, std::string>> sections;
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer<float>& l = model.layers[i];
    layers.push_back({{"kind", to_string(l.spec.kind)},
                      {"units", l.spec.units},
                      {"kernel", l.spec.kernel},
                      {"padding", l.spec.padding},
                      {"window", l.spec.window},
                      {"activation", to_string(l.spec.activation)}});
    const std::string p = "layer" + std::to_string(i) + ".";
    if (l.spec.parametric()) {
      sections.emplace_back(p + "weights", pack_floats(l.weights.values()));
      sections.emplace_back(p + "mask", pack_bits(l.weights.mask()));
      sections.emplace_back(p + "bias", pack_floats(l.bias));
    }
    if (l.spec.kind == LayerKind::Conv) sections.emplace_back(p + "area", pack_bits(l.area_mask));
    if (l.spec.kind == LayerKind::BatchNorm) {
      sections.emplace_back(p + "running_mean", pack_floats(l.running_mean));
      sections.emplace_back(p + "running_var", pack_floats(l.running_var));
    }
  }
  header["layers"] = layers;
  json table = json::array();
  for (const auto& [name, data] : sections) table.push_back({{"name", name}, {"bytes", data.size()}});
  header["sections"] = table;

  std::string out(kMagic);
  const std::string text = header.dump();
  put_u64(out, text.size());
  out += text;
  for (const auto& [name, data] : sections) {
    put_u64(out, data.size());
    out += data;
  }
  return out;
}

Model<float> decode_checkpoint(const std::string& bytes) {
  using nlohmann::json;
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  Reader in(bytes);
  in.take(kMagic.size());
  json header;
  try {
    header = json::parse(in.take(in.u64()));
    Architecture arch;
    const auto input = header.at("input");
    arch.input = {input.at(0).get<std::size_t>(), input.at(1).get<std::size_t>(), input.at(2).get<std::size_t>()};
    for (const auto& l : header.at("layers")) {
      LayerSpec s;
      s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      s.units = l.at("units").get<std::size_t>();
      s.kernel = l.at("kernel").get<std::size_t>();
      s.padding = l.at("padding").get<std::size_t>();
      s.window = l.at("window").get<std::size_t>();
      s.activation = activation_from_string(l.at("activation").get<std::string>());
      arch.layers.push_back(s);
    }
    Model<float> model = build_model<float>(arch, header.at("seed").get<std::uint64_t>());
    model.rng.restore(header.at("rng").get<std::string>());
    model.bn_epsilon = header.at("bn_epsilon").get<double>();
    model.bn_momentum = header.at("bn_momentum").get<double>();

    std::vector<std::string> names;
    for (const auto& s : header.at("sections")) names.push_back(s.at("name").get<std::string>());
    std::size_t next = 0;
    auto section = [&](const std::string& name) {
      if (next >= names.size() || names[next] != name) throw ConsistencyError("missing section " + name);
      ++next;
      return in.take(in.u64());
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      Layer<float>& l = model.layers[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      if (l.spec.parametric()) {
        const std::size_t n = l.weights.size();
        auto values = unpack_floats(section(p + "weights"), n);
        auto mask = unpack_bits(section(p + "mask"), n);
        for (std::size_t k = 0; k < n; ++k) {
          if (!mask[k] && values[k] != 0.0f) throw ConsistencyError("dormant weight with non-zero value");
        }
        l.weights = MaskedTensor<float>(l.weights.shape(), std::move(values), std::move(mask));
        l.bias = unpack_floats(section(p + "bias"), l.bias.size());
      }
      if (l.spec.kind == LayerKind::Conv) l.area_mask = unpack_bits(section(p + "area"), l.area_mask.size());
      if (l.spec.kind == LayerKind::BatchNorm) {
        l.running_mean = unpack_floats(section(p + "running_mean"), l.running_mean.size());
        l.running_var = unpack_floats(section(p + "running_var"), l.running_var.size());
      }
    }
    if (next != names.size() || !in.done()) throw ConsistencyError("checkpoint has trailing data");
    model.infer_shapes();
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

Model<float> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace nest
