#include "isds/io.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace isds {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'I', 'S', 'D', 'S', 'B', 'I', 'N', '1'};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

json mlp_to_json(const Mlp& net) {
  json j;
  j["dims"] = net.dims;
  j["activation"] = activation_name(net.activation);
  if (net.activation == Activation::LeakyRelu) j["leaky_slope"] = net.leaky_slope;
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    weights.push_back(std::vector<double>(net.weights[l].data(),
                                          net.weights[l].data() + net.weights[l].size()));
    biases.push_back(std::vector<double>(net.biases[l].data(),
                                         net.biases[l].data() + net.biases[l].size()));
  }
  j["weights"] = weights;
  j["biases"] = biases;
  return j;
}

Mlp mlp_from_json(const json& j) {
  Mlp net;
  net.dims = j.at("dims").get<std::vector<int>>();
  net.activation = activation_from_name(j.at("activation").get<std::string>());
  if (j.contains("leaky_slope")) net.leaky_slope = j.at("leaky_slope").get<double>();
  const auto weights = j.at("weights");
  const auto biases = j.at("biases");
  if (weights.size() + 1 != net.dims.size())
    throw std::invalid_argument("checkpoint: layer count does not match dims");
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    const auto w = weights[l].get<std::vector<double>>();
    const auto b = biases[l].get<std::vector<double>>();
    const int rows = net.dims[l + 1];
    const int cols = net.dims[l];
    if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows)
      throw std::invalid_argument("checkpoint: weight blob size mismatch");
    Mat wm(rows, cols);
    std::memcpy(wm.data(), w.data(), w.size() * sizeof(double));
    net.weights.push_back(std::move(wm));
    net.biases.push_back(Eigen::Map<const Vec>(b.data(), rows));
  }
  return net;
}

json masked_mlp_to_json(const MaskedMlp& net) {
  json j = mlp_to_json(net.net);
  if (net.masked()) {
    json masks = json::array();
    for (const Mat& m : net.masks)
      masks.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    j["masks"] = masks;
  }
  return j;
}

MaskedMlp masked_mlp_from_json(const json& j) {
  MaskedMlp out;
  out.net = mlp_from_json(j);
  if (j.contains("masks")) {
    const auto masks = j.at("masks");
    for (std::size_t l = 0; l < masks.size(); ++l) {
      const auto blob = masks[l].get<std::vector<double>>();
      const Mat& w = out.net.weights.at(l);
      if (static_cast<Eigen::Index>(blob.size()) != w.size())
        throw std::invalid_argument("checkpoint: mask size mismatch");
      Mat m(w.rows(), w.cols());
      std::memcpy(m.data(), blob.data(), blob.size() * sizeof(double));
      out.masks.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<double> vec_to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vec_from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json msm_to_json(const MsmModel& model) {
  json j;
  j["K"] = model.K;
  j["K0"] = model.K0;
  j["M"] = model.M;
  j["m"] = model.m;
  j["cov_mode"] = covariance_mode_name(model.cov_mode);
  j["pi_logits"] = vec_to_std(model.pi_logits);
  j["q_logits"] = std::vector<double>(model.q_logits.data(),
                                      model.q_logits.data() + model.q_logits.size());
  json init = json::array();
  for (const auto& c : model.init)
    init.push_back({{"mean", vec_to_std(c.mean)}, {"var_raw", vec_to_std(c.var_raw)}});
  j["init"] = init;
  json trans = json::array();
  for (const auto& tr : model.transitions) {
    json t;
    t["mean_net"] = masked_mlp_to_json(tr.mean_net);
    t["cov_raw"] = vec_to_std(tr.cov_raw);
    t["cov_scale_raw"] = tr.cov_scale_raw;
    if (tr.overlap) {
      t["overlap"] = {{"shared_net", mlp_to_json(tr.overlap->shared_net)},
                      {"lo", tr.overlap->lo},
                      {"hi", tr.overlap->hi}};
    }
    trans.push_back(std::move(t));
  }
  j["transitions"] = trans;
  return j;
}

MsmModel msm_from_json(const json& j) {
  MsmModel model;
  model.K = j.at("K").get<int>();
  model.K0 = j.at("K0").get<int>();
  model.M = j.at("M").get<int>();
  model.m = j.at("m").get<int>();
  model.cov_mode = covariance_mode_from_name(j.at("cov_mode").get<std::string>());
  model.pi_logits = vec_from_std(j.at("pi_logits").get<std::vector<double>>());
  const auto qv = j.at("q_logits").get<std::vector<double>>();
  if (static_cast<int>(qv.size()) != model.K * model.K)
    throw std::invalid_argument("checkpoint: Q blob size mismatch");
  model.q_logits.resize(model.K, model.K);
  std::memcpy(model.q_logits.data(), qv.data(), qv.size() * sizeof(double));
  for (const auto& c : j.at("init")) {
    InitialComponent comp;
    comp.mean = vec_from_std(c.at("mean").get<std::vector<double>>());
    comp.var_raw = vec_from_std(c.at("var_raw").get<std::vector<double>>());
    model.init.push_back(std::move(comp));
  }
  for (const auto& t : j.at("transitions")) {
    Transition tr;
    tr.mean_net = masked_mlp_from_json(t.at("mean_net"));
    tr.cov_raw = vec_from_std(t.at("cov_raw").get<std::vector<double>>());
    tr.cov_scale_raw = t.at("cov_scale_raw").get<double>();
    if (t.contains("overlap")) {
      OverlapBlend blend;
      blend.shared_net = mlp_from_json(t.at("overlap").at("shared_net"));
      blend.lo = t.at("overlap").at("lo").get<double>();
      blend.hi = t.at("overlap").at("hi").get<double>();
      tr.overlap = std::move(blend);
    }
    model.transitions.push_back(std::move(tr));
  }
  model.validate();
  return model;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename into place: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_container(const std::string& path, const DatasetContainer& c) {
  const std::size_t expected =
      static_cast<std::size_t>(c.N) * c.T * c.dim;
  if (c.payload.size() != expected)
    throw ShapeError("write_container: payload does not match the declared shape");

  json header;
  header["schema_version"] = c.schema_version;
  header["dtype"] = "float64";
  header["shape"] = {c.N, c.T, c.dim};
  header["role"] = c.role;
  header["seed"] = c.seed;
  header["generator"] = c.generator_tag;
  header["payload_bytes"] = c.payload.size() * sizeof(double);
  header["payload_crc32"] = crc32(c.payload.data(), c.payload.size() * sizeof(double));
  const std::string htext = header.dump();

  std::string blob;
  blob.reserve(8 + 4 + htext.size() + c.payload.size() * sizeof(double));
  blob.append(kMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  blob.append(reinterpret_cast<const char*>(&hlen), 4);
  blob.append(htext);
  blob.append(reinterpret_cast<const char*>(c.payload.data()),
              c.payload.size() * sizeof(double));
  atomic_write_file(path, blob);
}

DatasetContainer read_container(const std::string& path) {
  const std::string blob = read_file(path);
  if (blob.size() < 12 || std::memcmp(blob.data(), kMagic, 8) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  std::uint32_t hlen;
  std::memcpy(&hlen, blob.data() + 8, 4);
  if (blob.size() < 12 + hlen) throw std::runtime_error("container: truncated header");
  const json header = json::parse(blob.substr(12, hlen));

  DatasetContainer c;
  c.schema_version = header.at("schema_version").get<int>();
  if (header.at("dtype").get<std::string>() != "float64")
    throw std::runtime_error("container: unsupported dtype");
  const auto shape = header.at("shape").get<std::vector<int>>();
  c.N = shape.at(0);
  c.T = shape.at(1);
  c.dim = shape.at(2);
  c.role = header.at("role").get<std::string>();
  c.seed = header.at("seed").get<std::uint64_t>();
  c.generator_tag = header.at("generator").get<std::string>();

  const std::size_t bytes = header.at("payload_bytes").get<std::size_t>();
  const std::size_t expected = static_cast<std::size_t>(c.N) * c.T * c.dim * sizeof(double);
  if (bytes != expected) throw std::runtime_error("container: payload length mismatch");
  if (blob.size() != 12 + hlen + bytes) throw std::runtime_error("container: truncated payload");

  c.payload.resize(expected / sizeof(double));
  std::memcpy(c.payload.data(), blob.data() + 12 + hlen, bytes);
  const std::uint32_t want = header.at("payload_crc32").get<std::uint32_t>();
  const std::uint32_t got = crc32(c.payload.data(), bytes);
  if (want != got) throw std::runtime_error("container: checksum mismatch in " + path);
  return c;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["kind"] = ckpt.kind;
  j["prior"] = msm_to_json(ckpt.prior);
  if (ckpt.sds) {
    j["decoder"] = mlp_to_json(ckpt.sds->decoder);
    j["obs_noise_raw"] = vec_to_std(ckpt.sds->obs_noise_raw);
    j["encoder_mean"] = mlp_to_json(ckpt.sds->encoder_mean);
    j["encoder_logvar"] = mlp_to_json(ckpt.sds->encoder_logvar);
  }
  j["meta"] = json::parse(ckpt.meta_json);
  return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = json::parse(text);
  Checkpoint ckpt;
  ckpt.kind = j.at("kind").get<std::string>();
  if (ckpt.kind != "iMSM" && ckpt.kind != "iSDS")
    throw std::invalid_argument("checkpoint: unknown kind " + ckpt.kind);
  ckpt.prior = msm_from_json(j.at("prior"));
  if (ckpt.kind == "iSDS") {
    SdsModel sds;
    sds.prior = ckpt.prior;
    sds.decoder = mlp_from_json(j.at("decoder"));
    sds.obs_noise_raw = vec_from_std(j.at("obs_noise_raw").get<std::vector<double>>());
    sds.encoder_mean = mlp_from_json(j.at("encoder_mean"));
    sds.encoder_logvar = mlp_from_json(j.at("encoder_logvar"));
    sds.validate();
    ckpt.sds = std::move(sds);
  }
  ckpt.meta_json = j.value("meta", json::object()).dump();
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  atomic_write_file(path, checkpoint_to_json(ckpt) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_file(path));
}

std::string graphs_to_json(const RegimeGraphSet& graphs) {
  json j;
  j["K"] = graphs.K;
  j["m"] = graphs.m;
  j["M"] = graphs.M;
  json adj = json::array();
  for (int k = 0; k < graphs.K; ++k) {
    json lags = json::array();
    for (int lag = 0; lag < graphs.M; ++lag)
      lags.push_back(std::vector<double>(graphs.adj[k][lag].data(),
                                         graphs.adj[k][lag].data() + graphs.adj[k][lag].size()));
    adj.push_back(std::move(lags));
  }
  j["adj"] = adj;
  j["supported"] = graphs.supported;
  return j.dump();
}

RegimeGraphSet graphs_from_json(const std::string& text) {
  const json j = json::parse(text);
  RegimeGraphSet g = RegimeGraphSet::zeros(j.at("K").get<int>(), j.at("m").get<int>(),
                                           j.at("M").get<int>());
  const auto adj = j.at("adj");
  for (int k = 0; k < g.K; ++k)
    for (int lag = 0; lag < g.M; ++lag) {
      const auto blob = adj[k][lag].get<std::vector<double>>();
      if (static_cast<int>(blob.size()) != g.m * g.m)
        throw std::invalid_argument("graphs: adjacency blob size mismatch");
      std::memcpy(g.adj[k][lag].data(), blob.data(), blob.size() * sizeof(double));
    }
  g.supported = j.at("supported").get<std::vector<bool>>();
  return g;
}

}  // namespace isds
