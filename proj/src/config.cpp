#include "ltr/config.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ltr::cli {

using nlohmann::json;

namespace {

json default_config() {
  return json{
      {"seed", 7},
      {"workers", 1},
      {"dataset",
       {{"path", ""},
        {"feature_dim", 0},
        {"normalization", "none"},
        {"binarize", false},
        {"binarize_threshold", 1.0},
        {"qid_policy", "error"},
        {"synthetic",
         {{"num_queries", 0}, {"docs_per_query", 30}, {"dim", 20}, {"noise", 0.1}}}}},
      {"ranker",
       {{"framework", "erm"},
        {"kind", "RankNet"},
        {"sigma", 1.0},
        {"alpha", 10.0},
        {"masked_label_policy", "zero"},
        {"listnet_target", "label"},
        {"k", 10},
        {"temperature", 0.5},
        {"samples_per_query", 5},
        {"g_steps", 1},
        {"d_steps", 1}}},
      {"net", {{"layers", 3}, {"hidden", 100}, {"activation", "ReLU"}, {"batchnorm", true}}},
      {"optimizer", {{"lr", 1e-3}, {"l2", 1e-3}}},
      {"eval",
       {{"epochs", 100},
        {"cutoffs", json::array({1, 3, 5, 10, 20, 50})},
        {"num_folds", 5},
        {"mask_ratio", 0.0},
        {"relevance_threshold", 1.0},
        {"exclude_zero_relevance", false}}},
      {"grid",
       {{"activations", json::array()},
        {"layers", json::array()},
        {"hidden", json::array()},
        {"lrs", json::array()},
        {"max_cells", 512}}},
      {"masksweep", {{"ratios", json::array({0.0, 0.1, 0.2, 0.3, 0.4, 0.5})}}},
      {"evaluate", {{"checkpoint", ""}}},
      {"output", {{"dir", "out"}}},
  };
}

[[noreturn]] void key_error(const std::string& key, const std::string& what) {
  throw ConfigError("config key \"" + key + "\": " + what);
}

void check_value_type(const json& slot, const json& value, const std::string& key) {
  if (slot.is_number() && !value.is_number()) key_error(key, "expected a number");
  if (slot.is_string() && !value.is_string()) key_error(key, "expected a string");
  if (slot.is_boolean() && !value.is_boolean()) key_error(key, "expected a boolean");
  if (slot.is_array() && !value.is_array()) key_error(key, "expected an array");
}

// Recursive merge of user values over defaults; any key absent from the
// defaults tree is unknown and rejected.
void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) key_error(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) key_error(key, "unknown key");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      check_value_type(slot, it.value(), key);
      slot = it.value();
    }
  }
}

// Writes a dotted-key override into the user tree, validating the path and
// leaf type against the defaults tree.
void apply_override(json& user, const json& defaults, const std::string& dotted,
                    const std::string& raw_value) {
  const json* dnode = &defaults;
  json* unode = &user;
  std::string remainder = dotted;
  std::string walked;
  while (true) {
    const auto dot = remainder.find('.');
    const std::string head = remainder.substr(0, dot);
    walked = walked.empty() ? head : walked + "." + head;
    if (!dnode->contains(head))
      key_error(walked, "unknown key (overrides must reference existing config keys)");
    dnode = &(*dnode)[head];
    if (dot == std::string::npos) {
      if (dnode->is_object()) key_error(dotted, "cannot override a section, pick a leaf key");
      json value;
      try {
        value = json::parse(raw_value);
      } catch (const json::exception&) {
        value = raw_value;  // bare strings need no quotes on the command line
      }
      check_value_type(*dnode, value, dotted);
      (*unode)[head] = value;
      return;
    }
    if (!unode->contains(head)) (*unode)[head] = json::object();
    unode = &(*unode)[head];
    remainder = remainder.substr(dot + 1);
  }
}

template <typename T>
T range_checked(const json& j, const std::string& key, T lo, T hi) {
  T v;
  try {
    v = j.get<T>();
  } catch (const json::exception&) {
    key_error(key, "wrong type");
  }
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << "value " << v << " outside accepted range [" << lo << ", " << hi << "]";
    key_error(key, os.str());
  }
  return v;
}

ResolvedConfig build(const json& cfg) {
  ResolvedConfig out;
  harness::ExperimentConfig& e = out.experiment;

  e.seed = range_checked<std::uint64_t>(cfg["seed"], "seed", 0, UINT64_MAX);
  e.workers = range_checked<int>(cfg["workers"], "workers", 1, 1024);

  const json& ds = cfg["dataset"];
  e.dataset_path = ds["path"].get<std::string>();
  const int fdim = range_checked<int>(ds["feature_dim"], "dataset.feature_dim", 0, 1 << 20);
  if (fdim > 0) e.feature_dim = fdim;
  e.normalization = harness::normalization_from_string(ds["normalization"].get<std::string>());
  e.binarize = ds["binarize"].get<bool>();
  e.binarize_threshold = ds["binarize_threshold"].get<Scalar>();
  {
    const std::string p = ds["qid_policy"].get<std::string>();
    if (p == "error")
      e.qid_policy = data::QidPolicy::Error;
    else if (p == "merge")
      e.qid_policy = data::QidPolicy::Merge;
    else
      key_error("dataset.qid_policy", "accepted values: error, merge");
  }
  const json& syn = ds["synthetic"];
  e.synthetic.num_queries =
      range_checked<int>(syn["num_queries"], "dataset.synthetic.num_queries", 0, 1 << 24);
  e.synthetic.docs_per_query =
      range_checked<int>(syn["docs_per_query"], "dataset.synthetic.docs_per_query", 1, 1 << 20);
  e.synthetic.dim = range_checked<int>(syn["dim"], "dataset.synthetic.dim", 1, 1 << 20);
  e.synthetic.noise = range_checked<Scalar>(syn["noise"], "dataset.synthetic.noise", 0.0, 1e9);

  const json& rk = cfg["ranker"];
  {
    const std::string fw = rk["framework"].get<std::string>();
    if (fw == "erm")
      e.framework = harness::Framework::Erm;
    else if (fw == "adversarial")
      e.framework = harness::Framework::Adversarial;
    else
      key_error("ranker.framework", "accepted values: erm, adversarial");
  }
  e.erm_spec.kind = erm::loss_kind_from_string(rk["kind"].get<std::string>());
  e.erm_spec.sigma = range_checked<Scalar>(rk["sigma"], "ranker.sigma", 1e-9, 1e9);
  e.erm_spec.alpha = range_checked<Scalar>(rk["alpha"], "ranker.alpha", 1e-9, 1e9);
  {
    const std::string p = rk["masked_label_policy"].get<std::string>();
    if (p == "zero")
      e.erm_spec.masked_label_policy = erm::MaskedLabelPolicy::Zero;
    else if (p == "exclude")
      e.erm_spec.masked_label_policy = erm::MaskedLabelPolicy::Exclude;
    else
      key_error("ranker.masked_label_policy", "accepted values: zero, exclude");
  }
  {
    const std::string t = rk["listnet_target"].get<std::string>();
    if (t == "label")
      e.erm_spec.listnet_target = erm::ListNetTarget::RawLabels;
    else if (t == "gain")
      e.erm_spec.listnet_target = erm::ListNetTarget::Gains;
    else
      key_error("ranker.listnet_target", "accepted values: label, gain");
  }
  e.adv_spec.k = range_checked<int>(rk["k"], "ranker.k", 1, 1 << 20);
  e.adv_spec.temperature =
      range_checked<Scalar>(rk["temperature"], "ranker.temperature", 1e-9, 1e9);
  e.adv_spec.samples_per_query =
      range_checked<int>(rk["samples_per_query"], "ranker.samples_per_query", 1, 1 << 20);
  e.adv_spec.g_steps = range_checked<int>(rk["g_steps"], "ranker.g_steps", 0, 1 << 10);
  e.adv_spec.d_steps = range_checked<int>(rk["d_steps"], "ranker.d_steps", 0, 1 << 10);

  const json& net = cfg["net"];
  e.net.layers = range_checked<int>(net["layers"], "net.layers", 2, 64);
  e.net.hidden = range_checked<int>(net["hidden"], "net.hidden", 1, 1 << 16);
  e.net.activation = nn::activation_from_string(net["activation"].get<std::string>());
  e.net.batchnorm = net["batchnorm"].get<bool>();

  const json& opt = cfg["optimizer"];
  e.lr = range_checked<Scalar>(opt["lr"], "optimizer.lr", 0.0, 1e9);
  e.l2 = range_checked<Scalar>(opt["l2"], "optimizer.l2", 0.0, 1e9);

  const json& ev = cfg["eval"];
  e.epochs = range_checked<int>(ev["epochs"], "eval.epochs", 0, 1 << 20);
  e.cutoffs.clear();
  int prev = 0;
  for (const json& j : ev["cutoffs"]) {
    const int k = range_checked<int>(j, "eval.cutoffs", 1, 1 << 20);
    if (k <= prev) key_error("eval.cutoffs", "cutoffs must be nonempty ascending");
    e.cutoffs.push_back(k);
    prev = k;
  }
  if (e.cutoffs.empty()) key_error("eval.cutoffs", "cutoffs must be nonempty ascending");
  e.num_folds = range_checked<int>(ev["num_folds"], "eval.num_folds", 3, 1 << 10);
  e.mask_ratio = range_checked<Scalar>(ev["mask_ratio"], "eval.mask_ratio", 0.0, 1.0);
  e.relevance_threshold = ev["relevance_threshold"].get<Scalar>();
  e.exclude_zero_relevance = ev["exclude_zero_relevance"].get<bool>();

  const json& grid = cfg["grid"];
  for (const json& j : grid["activations"])
    out.grid.activations.push_back(nn::activation_from_string(j.get<std::string>()));
  for (const json& j : grid["layers"])
    out.grid.layer_counts.push_back(range_checked<int>(j, "grid.layers", 2, 64));
  for (const json& j : grid["hidden"])
    out.grid.hidden_sizes.push_back(range_checked<int>(j, "grid.hidden", 1, 1 << 16));
  for (const json& j : grid["lrs"])
    out.grid.lrs.push_back(range_checked<Scalar>(j, "grid.lrs", 0.0, 1e9));
  out.grid.max_cells = range_checked<int>(grid["max_cells"], "grid.max_cells", 1, 1 << 20);

  for (const json& j : cfg["masksweep"]["ratios"])
    out.mask_ratios.push_back(range_checked<Scalar>(j, "masksweep.ratios", 0.0, 1.0));

  out.checkpoint_path = cfg["evaluate"]["checkpoint"].get<std::string>();
  out.out_dir = cfg["output"]["dir"].get<std::string>();
  return out;
}

}  // namespace

ResolvedConfig parse_config_text(const std::string& json_text,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  json user;
  if (json_text.empty()) {
    user = json::object();
  } else {
    try {
      user = json::parse(json_text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }

  const json defaults = default_config();
  for (const auto& [key, value] : overrides) apply_override(user, defaults, key, value);

  json cfg = defaults;
  merge_checked(cfg, user, "");

  // The adversarial players default to the 5-layer / no-batchnorm shape;
  // explicit user values win.
  if (cfg["ranker"]["framework"].get<std::string>() == "adversarial") {
    const json* unet = user.contains("net") ? &user["net"] : nullptr;
    if (!unet || !unet->contains("layers")) cfg["net"]["layers"] = 5;
    if (!unet || !unet->contains("batchnorm")) cfg["net"]["batchnorm"] = false;
  }

  ResolvedConfig out = build(cfg);
  out.resolved_json = cfg.dump(2) + "\n";
  return out;
}

ResolvedConfig parse_config(const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  if (path.empty()) return parse_config_text("", overrides);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

}  // namespace ltr::cli
