#include "mambadm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace mambadm {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'B', 'D', 'M', 'C', 'K', 'P', '1'};

json config_to_json(const GlomaConfig& c) {
  json j;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["context_k"] = c.context_k;
  j["local_len"] = c.local_len;
  j["n_state"] = c.n_state;
  j["dropout"] = c.dropout;
  j["variant"] = to_string(c.variant);
  if (c.action.kind == ActionSpace::Kind::discrete)
    j["action"] = {{"type", "discrete"}, {"n", c.action.size}};
  else
    j["action"] = {{"type", "continuous"}, {"dim", c.action.size}};
  j["state_dim"] = c.state_dim;
  j["use_timestep_embedding"] = c.use_timestep_embedding;
  j["learnable_d"] = c.learnable_d;
  j["init"] = ssm::to_string(c.init);
  j["conv_width"] = c.conv_width;
  j["expand"] = c.expand;
  j["delta_per_channel"] = c.delta_per_channel;
  j["backend"] = ssm::to_string(c.backend);
  j["max_timestep"] = c.max_timestep;
  return j;
}

GlomaConfig config_from_json(const json& j) {
  GlomaConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.context_k = j.at("context_k").get<int>();
  c.local_len = j.at("local_len").get<int>();
  c.n_state = j.at("n_state").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  const json& a = j.at("action");
  if (a.at("type").get<std::string>() == "discrete")
    c.action = {ActionSpace::Kind::discrete, a.at("n").get<int>()};
  else
    c.action = {ActionSpace::Kind::continuous, a.at("dim").get<int>()};
  c.state_dim = j.at("state_dim").get<int>();
  c.use_timestep_embedding = j.at("use_timestep_embedding").get<bool>();
  c.learnable_d = j.at("learnable_d").get<bool>();
  c.init = ssm::parse_init_scheme(j.at("init").get<std::string>());
  c.conv_width = j.at("conv_width").get<int>();
  c.expand = j.at("expand").get<int>();
  c.delta_per_channel = j.at("delta_per_channel").get<bool>();
  c.backend = ssm::parse_scan_backend(j.at("backend").get<std::string>());
  c.max_timestep = j.at("max_timestep").get<int>();
  return c;
}

template <typename T>
void append_floats(std::vector<float>& payload, const MatX<T>& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      payload.push_back(static_cast<float>(m(i, j)));
}

template <typename T>
void read_floats(const std::vector<float>& payload, std::size_t& pos, MatX<T>& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(payload[pos++]);
}

struct RawFile {
  json header;
  std::vector<float> payload;
};

RawFile read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htxt(hlen, '\0');
  in.read(htxt.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("truncated checkpoint header: " + path);

  RawFile f;
  try {
    f.header = json::parse(htxt);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = f.header.at("payload_floats").get<std::uint64_t>();
  f.payload.resize(count);
  in.read(reinterpret_cast<char*>(f.payload.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw DataError("truncated checkpoint payload: " + path);
  return f;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, GlomaModel<T>& model,
                     const TrainState& state, const AdamW<T>* opt,
                     const StateNormalizer* norm) {
  auto params = model.params();

  json header;
  header["format_version"] = 1;
  header["config"] = config_to_json(model.config());
  header["train_state"] = {{"step", state.step}, {"tokens_seen", state.tokens_seen}};
  if (norm && !norm->identity) {
    json jn;
    jn["identity"] = false;
    jn["mean"] = std::vector<double>(norm->mean.data(),
                                     norm->mean.data() + norm->mean.size());
    jn["std"] = std::vector<double>(norm->stddev.data(),
                                    norm->stddev.data() + norm->stddev.size());
    header["state_norm"] = jn;
  } else {
    header["state_norm"] = {{"identity", true}};
  }

  json tensors = json::array();
  std::vector<float> payload;
  for (const auto* p : params) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()}});
    append_floats(payload, p->value);
  }
  header["params"] = std::move(tensors);
  header["adam"] = nullptr;
  if (opt && opt->initialized()) {
    header["adam"] = {{"t", opt->t}};
    for (const auto& m : opt->m) append_floats(payload, m);
    for (const auto& v : opt->v) append_floats(payload, v);
  }
  header["payload_floats"] = static_cast<std::uint64_t>(payload.size());

  const std::string htxt = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 8);
  const std::uint64_t hlen = htxt.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw DataError("write failure on checkpoint: " + path);
}

template void save_checkpoint<float>(const std::string&, GlomaModel<float>&,
                                     const TrainState&, const AdamW<float>*,
                                     const StateNormalizer*);
template void save_checkpoint<double>(const std::string&, GlomaModel<double>&,
                                      const TrainState&, const AdamW<double>*,
                                      const StateNormalizer*);

GlomaConfig peek_checkpoint_config(const std::string& path) {
  return config_from_json(read_file(path).header.at("config"));
}

GlomaModel<float> load_checkpoint(const std::string& path, TrainState* state,
                                  AdamW<float>* opt, StateNormalizer* norm,
                                  bool* has_opt) {
  RawFile f = read_file(path);
  GlomaConfig cfg = config_from_json(f.header.at("config"));
  GlomaModel<float> model(cfg, /*init_seed=*/0);
  auto params = model.params();

  const json& tensors = f.header.at("params");
  if (tensors.size() != params.size())
    throw DataError("incompatible checkpoint: parameter count mismatch");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != params[i]->name ||
        t.at("rows").get<Index>() != params[i]->value.rows() ||
        t.at("cols").get<Index>() != params[i]->value.cols())
      throw DataError("incompatible checkpoint: tensor " + params[i]->name);
    read_floats(f.payload, pos, params[i]->value);
  }

  if (state) {
    state->step = f.header.at("train_state").at("step").get<std::int64_t>();
    state->tokens_seen =
        f.header.at("train_state").at("tokens_seen").get<std::int64_t>();
  }
  const bool opt_present = !f.header.at("adam").is_null();
  if (has_opt) *has_opt = opt_present;
  if (opt) {
    if (opt_present) {
      opt->init(params);
      opt->t = f.header.at("adam").at("t").get<std::int64_t>();
      for (auto& m : opt->m) read_floats(f.payload, pos, m);
      for (auto& v : opt->v) read_floats(f.payload, pos, v);
    } else {
      opt->m.clear();
      opt->v.clear();
      opt->t = 0;
    }
  }
  if (norm) {
    const json& jn = f.header.at("state_norm");
    norm->identity = jn.at("identity").get<bool>();
    if (!norm->identity) {
      const auto mean = jn.at("mean").get<std::vector<double>>();
      const auto sd = jn.at("std").get<std::vector<double>>();
      norm->mean = Eigen::Map<const VecX<double>>(mean.data(),
                                                  static_cast<Index>(mean.size()));
      norm->stddev =
          Eigen::Map<const VecX<double>>(sd.data(), static_cast<Index>(sd.size()));
    }
  }
  return model;
}

}  // namespace mambadm
