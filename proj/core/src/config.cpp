#include "arc/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace arc {

namespace {
std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}
}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail_io("missing config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail_config("config line without '=': " + line);
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (key.empty()) fail_config("empty config key");
    values_[key] = value;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) fail_config("override must look like key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KeyValueConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (...) {
        fail_config("config key '" + key + "' expects an integer, got '" + it->second + "'");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        fail_config("config key '" + key + "' expects a number, got '" + it->second + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    fail_config("config key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::string KeyValueConfig::snapshot() const {
    std::string out;  // std::map iterates sorted
    for (const auto& [k, v] : values_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

namespace {

const std::vector<std::string> kKnownKeys = {
    "seed",
    "data.corpus", "data.n_docs", "data.fact_density", "data.heldout_frac",
    "encoder.d_model", "encoder.n_heads", "encoder.backbone_layers", "encoder.truncate_last",
    "encoder.causal", "encoder.max_compress_len",
    "pooling.factor", "pooling.variant", "pooling.placement", "pooling.remainder_policy",
    "projector.bottleneck",
    "decoders.list",
    "train.phase", "train.steps", "train.batch_size", "train.reconstruction_ratio",
    "train.lr_encoder", "train.lr_mlp", "train.lr_special", "train.lr_init", "train.lr_final",
    "train.warmup_steps", "train.weight_decay", "train.grad_clip_norm", "train.x",
    "train.continuation_prefix", "train.max_prefix",
    "train.recon_min_len", "train.recon_max_len", "train.cont_min_len", "train.cont_max_len",
    "train.fewshot_k_min", "train.fewshot_k_max", "train.lm_max_len", "train.adapt_decoder",
    "train.init_bundle",
    "chunk.len", "chunk.max_chunks",
    "eval.k_shot", "eval.n_items", "eval.max_new",
};

bool is_known_key(const std::string& key) {
    for (const auto& k : kKnownKeys)
        if (k == key) return true;
    // per-decoder geometry keys: decoders.<id>.d_model etc.
    if (key.rfind("decoders.", 0) == 0) {
        const auto last = key.rfind('.');
        const std::string field = key.substr(last + 1);
        return field == "d_model" || field == "n_layers" || field == "n_heads" || field == "ckpt";
    }
    return false;
}

int edit_distance(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = int(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = int(i);
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

const std::vector<std::string>& known_config_keys() { return kKnownKeys; }

void validate_keys(const KeyValueConfig& cfg) {
    for (const auto& [key, value] : cfg.values()) {
        if (is_known_key(key)) continue;
        std::vector<std::pair<int, std::string>> scored;
        for (const auto& k : kKnownKeys) scored.emplace_back(edit_distance(key, k), k);
        std::sort(scored.begin(), scored.end());
        std::string msg = "unknown config key '" + key + "'; nearest valid keys:";
        for (std::size_t i = 0; i < scored.size() && i < 3; ++i) msg += " " + scored[i].second;
        fail_config(msg);
    }
}

ArcConfig ArcConfig::from_kv(const KeyValueConfig& kv) {
    validate_keys(kv);
    ArcConfig c;
    c.seed = std::uint64_t(kv.get_int("seed", 0));
    c.corpus_path = kv.get_str("data.corpus", c.corpus_path);
    c.n_docs = int(kv.get_int("data.n_docs", c.n_docs));
    c.fact_density = int(kv.get_int("data.fact_density", c.fact_density));
    c.heldout_frac = kv.get_double("data.heldout_frac", c.heldout_frac);

    c.enc.d_model = int(kv.get_int("encoder.d_model", c.enc.d_model));
    c.enc.n_heads = int(kv.get_int("encoder.n_heads", c.enc.n_heads));
    c.enc.backbone_layers = int(kv.get_int("encoder.backbone_layers", c.enc.backbone_layers));
    c.enc.truncate_last = int(kv.get_int("encoder.truncate_last", c.enc.truncate_last));
    c.enc.causal = kv.get_bool("encoder.causal", c.enc.causal);
    c.enc.max_compress_len = int(kv.get_int("encoder.max_compress_len", c.enc.max_compress_len));
    c.enc.pooling_factor = int(kv.get_int("pooling.factor", c.enc.pooling_factor));
    c.enc.variant = pooling_variant_from_string(
        kv.get_str("pooling.variant", to_string(c.enc.variant)));
    c.enc.remainder = remainder_policy_from_string(
        kv.get_str("pooling.remainder_policy", "small_last_group"));
    c.enc.placement_every_two = kv.get_str("pooling.placement", "last") == "every_two";
    c.d_bottleneck = int(kv.get_int("projector.bottleneck", c.d_bottleneck));

    std::stringstream ids(kv.get_str("decoders.list", "A"));
    std::string id;
    while (std::getline(ids, id, ',')) {
        id = trim(id);
        if (id.empty()) continue;
        DecoderSpec d;
        d.id = id;
        d.d_model = int(kv.get_int("decoders." + id + ".d_model", d.d_model));
        d.n_layers = int(kv.get_int("decoders." + id + ".n_layers", d.n_layers));
        d.n_heads = int(kv.get_int("decoders." + id + ".n_heads", d.n_heads));
        d.ckpt = kv.get_str("decoders." + id + ".ckpt", "");
        c.decoders.push_back(std::move(d));
    }

    TrainConfig& t = c.train;
    t.phase = phase_from_string(kv.get_str("train.phase", "pretrain"));
    t.steps = int(kv.get_int("train.steps", t.steps));
    t.batch_size = int(kv.get_int("train.batch_size", t.batch_size));
    t.reconstruction_ratio = kv.get_double("train.reconstruction_ratio", t.reconstruction_ratio);
    t.lr_encoder = kv.get_double("train.lr_encoder", t.lr_encoder);
    t.lr_mlp = kv.get_double("train.lr_mlp", t.lr_mlp);
    t.lr_special = kv.get_double("train.lr_special", t.lr_special);
    t.lr_init = kv.get_double("train.lr_init", t.lr_init);
    t.lr_final = kv.get_double("train.lr_final", t.lr_final);
    t.warmup_steps = int(kv.get_int("train.warmup_steps", t.warmup_steps));
    t.weight_decay = kv.get_double("train.weight_decay", t.weight_decay);
    t.grad_clip_norm = kv.get_double("train.grad_clip_norm", t.grad_clip_norm);
    t.seed = c.seed;
    t.x_train = int(kv.get_int("train.x", t.x_train));
    t.continuation_prefix = kv.get_bool("train.continuation_prefix", t.continuation_prefix);
    t.max_prefix = int(kv.get_int("train.max_prefix", t.max_prefix));
    t.recon_min_len = int(kv.get_int("train.recon_min_len", t.recon_min_len));
    t.recon_max_len = int(kv.get_int("train.recon_max_len", t.recon_max_len));
    t.cont_min_len = int(kv.get_int("train.cont_min_len", t.cont_min_len));
    t.cont_max_len = int(kv.get_int("train.cont_max_len", t.cont_max_len));
    t.fewshot_k_min = int(kv.get_int("train.fewshot_k_min", t.fewshot_k_min));
    t.fewshot_k_max = int(kv.get_int("train.fewshot_k_max", t.fewshot_k_max));
    t.lm_max_len = int(kv.get_int("train.lm_max_len", t.lm_max_len));
    t.adapt_decoder = kv.get_str("train.adapt_decoder", "");
    for (const auto& d : c.decoders) t.decoders.push_back(d.id);
    c.init_bundle = kv.get_str("train.init_bundle", "");

    c.chunk_len = int(kv.get_int("chunk.len", c.chunk_len));
    c.max_chunks = int(kv.get_int("chunk.max_chunks", c.max_chunks));
    c.eval_k_shot = int(kv.get_int("eval.k_shot", c.eval_k_shot));
    c.eval_n_items = int(kv.get_int("eval.n_items", c.eval_n_items));
    c.eval_max_new = int(kv.get_int("eval.max_new", c.eval_max_new));
    return c;
}

std::string run_file(const std::string& run_dir, const std::string& name) {
    return (std::filesystem::path(run_dir) / name).string();
}

void ensure_run_dir(const std::string& run_dir) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) fail_io("cannot create run directory: " + run_dir);
}

void write_snapshot(const std::string& run_dir, const KeyValueConfig& cfg) {
    std::ofstream os(run_file(run_dir, "config.snapshot"));
    if (!os) fail_io("cannot write config snapshot in " + run_dir);
    os << cfg.snapshot();
}

}  // namespace arc
