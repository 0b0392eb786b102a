#include "arc/training.hpp"

#include <cmath>
#include <ostream>

namespace arc {

double one_cycle_lr(int step, const OneCycle& s) {
    if (step < 0 || step >= s.total) fail_contract("one_cycle_lr: step outside [0, total)");
    if (s.warmup > 0 && step < s.warmup)
        return s.init_lr + (s.max_lr - s.init_lr) * double(step) / double(s.warmup);
    const int span = s.total - 1 - s.warmup;
    if (span <= 0) return s.max_lr;
    const double t = double(step - s.warmup) / double(span);
    return s.final_lr + (s.max_lr - s.final_lr) * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
}

Phase phase_from_string(const std::string& s) {
    if (s == "pretrain") return Phase::Pretrain;
    if (s == "finetune") return Phase::Finetune;
    if (s == "adapt" || s == "adapt_new_decoder") return Phase::AdaptNewDecoder;
    if (s == "decoder_lm") return Phase::DecoderLm;
    fail_config("unknown phase '" + s + "' (pretrain, finetune, adapt, decoder_lm)");
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Pretrain: return "pretrain";
        case Phase::Finetune: return "finetune";
        case Phase::AdaptNewDecoder: return "adapt";
        case Phase::DecoderLm: return "decoder_lm";
    }
    return "?";
}

void AdamW::update(std::span<const Tensor> params, double lr, double weight_decay) {
    for (const Tensor& p : params) {
        detail::Node* n = p.node();
        if (!n || n->grad.size() != n->data.size()) continue;  // no gradient this step
        State& st = state_[n];
        if (st.m.empty()) {
            st.m.assign(n->data.size(), 0.0f);
            st.v.assign(n->data.size(), 0.0f);
        }
        st.t += 1;
        const double bc1 = 1.0 - std::pow(beta1_, st.t);
        const double bc2 = 1.0 - std::pow(beta2_, st.t);
        for (std::size_t i = 0; i < n->data.size(); ++i) {
            const double g = double(n->grad[i]);
            st.m[i] = float(beta1_ * st.m[i] + (1.0 - beta1_) * g);
            st.v[i] = float(beta2_ * st.v[i] + (1.0 - beta2_) * g * g);
            const double mhat = double(st.m[i]) / bc1;
            const double vhat = double(st.v[i]) / bc2;
            double x = double(n->data[i]);
            x -= lr * mhat / (std::sqrt(vhat) + eps_);
            x -= lr * weight_decay * x;  // decoupled decay, never via the gradient
            n->data[i] = float(x);
        }
    }
}

double global_grad_norm(std::span<const Tensor> params) {
    double sq = 0.0;
    for (const Tensor& p : params) {
        detail::Node* n = p.node();
        if (!n || n->grad.size() != n->data.size()) continue;
        for (float g : n->grad) sq += double(g) * double(g);
    }
    return std::sqrt(sq);
}

double clip_global_grad_norm(std::span<const Tensor> params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const float k = float(max_norm / norm);
        for (const Tensor& p : params) {
            detail::Node* n = p.node();
            if (!n || n->grad.size() != n->data.size()) continue;
            for (float& g : n->grad) g *= k;
        }
    }
    return norm;
}

std::uint64_t tensor_hash(const Tensor& t) {
    return fnv1a64(t.data().data(), t.numel() * sizeof(float));
}

void write_metrics_header(std::ostream& os) { os << "step,task,decoder,loss,lr,grad_norm\n"; }

namespace {
const char* task_name(TrainingSample::Task t) {
    switch (t) {
        case TrainingSample::Task::Reconstruction: return "reconstruction";
        case TrainingSample::Task::Continuation: return "continuation";
        case TrainingSample::Task::Fewshot: return "fewshot";
        case TrainingSample::Task::LongContext: return "longcontext";
    }
    return "?";
}

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}
}  // namespace

void write_metrics_row(std::ostream& os, const StepResult& r) {
    os << r.step << ',' << task_name(r.task) << ',' << r.decoder_id << ',' << fmt_g(r.loss) << ','
       << fmt_g(r.lr) << ',' << fmt_g(r.grad_norm) << '\n';
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(ArcBundle& bundle, const std::vector<SyntheticDoc>& train_docs, TrainConfig cfg)
    : bundle_(bundle),
      docs_(train_docs),
      cfg_(std::move(cfg)),
      data_rng_(sub_seed(cfg_.seed, "data")),
      task_rng_(sub_seed(cfg_.seed, "task")),
      decoder_rng_(sub_seed(cfg_.seed, "decoder")) {
    if (cfg_.decoders.empty()) cfg_.decoders = bundle_.registry.ids();
    if (cfg_.phase == Phase::AdaptNewDecoder) {
        if (cfg_.adapt_decoder.empty()) fail_config("adapt phase requires an adapt_decoder id");
        cfg_.decoders = {cfg_.adapt_decoder};
    }
    for (const auto& id : cfg_.decoders)
        if (!bundle_.registry.has(id)) fail_config("trainer: unknown decoder '" + id + "'");
    sched_enc_ = {cfg_.lr_init, cfg_.lr_encoder, cfg_.lr_final, cfg_.warmup_steps, cfg_.steps};
    sched_mlp_ = {cfg_.lr_init, cfg_.lr_mlp, cfg_.lr_final, cfg_.warmup_steps, cfg_.steps};
    sched_special_ = {cfg_.lr_init, cfg_.lr_special, cfg_.lr_final, cfg_.warmup_steps, cfg_.steps};
}

std::string Trainer::sample_decoder() {
    if (cfg_.decoders.size() == 1) return cfg_.decoders[0];
    return cfg_.decoders[std::size_t(decoder_rng_.next_int(0, int(cfg_.decoders.size()) - 1))];
}

TrainingSample::Task Trainer::sample_task() {
    if (cfg_.phase != Phase::Pretrain) return TrainingSample::Task::Fewshot;
    return task_rng_.bernoulli(cfg_.reconstruction_ratio) ? TrainingSample::Task::Reconstruction
                                                          : TrainingSample::Task::Continuation;
}

std::vector<TrainingSample> Trainer::build_batch(TrainingSample::Task task) {
    std::vector<TrainingSample> batch;
    batch.reserve(std::size_t(cfg_.batch_size));
    const int x = cfg_.x_train;
    for (int b = 0; b < cfg_.batch_size; ++b) {
        switch (task) {
            case TrainingSample::Task::Reconstruction: {
                auto seq = corpus_slice(docs_, data_rng_, cfg_.recon_min_len, cfg_.recon_max_len);
                batch.push_back(build_reconstruction(seq, x));
                break;
            }
            case TrainingSample::Task::Continuation: {
                auto seq = corpus_slice(docs_, data_rng_, cfg_.cont_min_len, cfg_.cont_max_len);
                const int n = int(seq.size());
                // split drawn uniformly inside [25%, 75%] of the sequence
                int split = data_rng_.next_int(n / 4, 3 * n / 4);
                split = std::max(1, std::min(split, n - 1));
                int prefix = 0;
                if (cfg_.continuation_prefix) {
                    const int cap = std::min(cfg_.max_prefix, split - 1);
                    if (cap > 0) prefix = data_rng_.next_int(0, cap);
                }
                batch.push_back(build_continuation(seq, x, split, prefix));
                break;
            }
            case TrainingSample::Task::Fewshot: {
                const int k = data_rng_.next_int(cfg_.fewshot_k_min, cfg_.fewshot_k_max);
                std::vector<FewshotExample> ex;
                for (int j = 0; j < k; ++j) {
                    const auto& doc = docs_[std::size_t(data_rng_.next_int(0, int(docs_.size()) - 1))];
                    ex.push_back(fewshot_example_from(doc, data_rng_));
                }
                batch.push_back(build_fewshot(ex, k, x));
                break;
            }
            case TrainingSample::Task::LongContext:
                fail_config("long-context batches are not wired into the desk-scale loop");
        }
    }
    return batch;
}

Tensor Trainer::sample_loss(const TrainingSample& s, DecoderEntry& entry) {
    std::vector<Tensor> parts;
    parts.reserve(s.input.size());
    for (const auto& seg : s.input) {
        if (seg.kind == Segment::Kind::Text)
            parts.push_back(embed_tokens(entry.decoder, seg.tokens));
        else
            parts.push_back(compress_rows(bundle_.arc, entry, seg.tokens, s.factor, seg.task));
    }
    Tensor rows = parts.size() == 1 ? parts[0] : concat_rows(parts);
    ForwardResult r = forward_stack(rows, entry.decoder);
    return cross_entropy_masked(r.logits, s.targets, s.loss_mask);
}

void Trainer::set_trainable(const std::string& decoder_id) {
    const bool train_encoder = cfg_.phase != Phase::AdaptNewDecoder;
    bundle_.arc.encoder.set_requires_grad(train_encoder);
    if (bundle_.arc.mem_embed.defined()) bundle_.arc.mem_embed.set_requires_grad(train_encoder);
    for (const auto& id : bundle_.registry.ids()) {
        DecoderEntry& e = bundle_.registry.at(id);
        const bool active = id == decoder_id;
        e.projector.w1.set_requires_grad(active);
        e.projector.w2.set_requires_grad(active);
        e.specials.cont_vec.set_requires_grad(active);
        e.specials.rec_vec.set_requires_grad(active);
    }
}

std::vector<Tensor> Trainer::encoder_group() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : bundle_.arc.encoder.named_params()) out.push_back(t);
    if (bundle_.arc.mem_embed.defined()) out.push_back(bundle_.arc.mem_embed);
    return out;
}

std::vector<Tensor> Trainer::mlp_group(const DecoderEntry& e) const {
    return {e.projector.w1, e.projector.w2};
}

std::vector<Tensor> Trainer::special_group(const DecoderEntry& e) const {
    return {e.specials.cont_vec, e.specials.rec_vec};
}

StepResult Trainer::step(int step_index) {
    const TrainingSample::Task task = sample_task();
    const std::string decoder_id = sample_decoder();
    DecoderEntry& entry = bundle_.registry.at(decoder_id);
    auto batch = build_batch(task);

    set_trainable(decoder_id);
    auto enc = encoder_group();
    auto mlp = mlp_group(entry);
    auto spc = special_group(entry);
    std::vector<Tensor> all;
    if (cfg_.phase != Phase::AdaptNewDecoder) all.insert(all.end(), enc.begin(), enc.end());
    all.insert(all.end(), mlp.begin(), mlp.end());
    all.insert(all.end(), spc.begin(), spc.end());
    for (Tensor& p : all) p.zero_grad();

    double loss_sum = 0.0;
    const float inv_b = 1.0f / float(batch.size());
    for (const auto& s : batch) {
        Tensor loss = sample_loss(s, entry);
        const double lv = double(loss.item());
        if (std::isnan(lv) || std::isinf(lv))
            fail_numeric("training: non-finite loss at step " + std::to_string(step_index) +
                         " (task=" + task_name(task) + ", decoder=" + decoder_id + ")");
        loss_sum += lv;
        backward(scale(loss, inv_b));
    }

    StepResult r;
    r.step = step_index;
    r.task = task;
    r.decoder_id = decoder_id;
    r.loss = loss_sum / double(batch.size());
    r.grad_norm = clip_global_grad_norm(all, cfg_.grad_clip_norm);
    r.lr = one_cycle_lr(step_index, sched_enc_);

    if (cfg_.phase != Phase::AdaptNewDecoder)
        opt_.update(enc, r.lr, cfg_.weight_decay);
    opt_.update(mlp, one_cycle_lr(step_index, sched_mlp_), cfg_.weight_decay);
    opt_.update(spc, one_cycle_lr(step_index, sched_special_), cfg_.weight_decay);
    return r;
}

void Trainer::run(std::ostream* metrics_csv) {
    if (metrics_csv) write_metrics_header(*metrics_csv);
    for (int i = 0; i < cfg_.steps; ++i) {
        StepResult r = step(i);
        if (metrics_csv) write_metrics_row(*metrics_csv, r);
    }
}

// ---------------------------------------------------------------------------
// Decoder stand-in LM pretraining
// ---------------------------------------------------------------------------

ModelParams train_decoder_lm(const std::string& name, BlockConfig block, int n_layers, int vocab,
                             const std::vector<SyntheticDoc>& docs, const TrainConfig& cfg,
                             std::ostream* metrics_csv) {
    Rng init_rng(sub_seed(cfg.seed, "init." + name));
    ModelParams model = ModelParams::init(name, block, vocab, n_layers, /*with_head=*/true, init_rng);
    Rng data_rng(sub_seed(cfg.seed, "data." + name));
    AdamW opt;
    OneCycle sched{cfg.lr_init, cfg.lr_encoder, cfg.lr_final, cfg.warmup_steps, cfg.steps};
    std::vector<Tensor> params;
    for (auto& [n, t] : model.named_params()) params.push_back(t);

    if (metrics_csv) write_metrics_header(*metrics_csv);
    for (int stepi = 0; stepi < cfg.steps; ++stepi) {
        for (Tensor& p : params) p.zero_grad();
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            auto toks = lm_sequence(docs, data_rng, cfg.lm_max_len);
            const int n = int(toks.size());
            std::vector<int> targets(std::size_t(n), -1);
            std::vector<std::uint8_t> mask(std::size_t(n), 0);
            for (int i = 0; i + 1 < n; ++i) {
                targets[std::size_t(i)] = toks[std::size_t(i + 1)];
                mask[std::size_t(i)] = 1;
            }
            ForwardResult r = forward_stack(embed_tokens(model, toks), model);
            Tensor loss = cross_entropy_masked(r.logits, targets, mask);
            const double lv = double(loss.item());
            if (std::isnan(lv) || std::isinf(lv))
                fail_numeric("decoder_lm: non-finite loss at step " + std::to_string(stepi));
            loss_sum += lv;
            backward(scale(loss, 1.0f / float(cfg.batch_size)));
        }
        StepResult r;
        r.step = stepi;
        r.task = TrainingSample::Task::Continuation;
        r.decoder_id = name;
        r.loss = loss_sum / cfg.batch_size;
        r.grad_norm = clip_global_grad_norm(params, cfg.grad_clip_norm);
        r.lr = one_cycle_lr(stepi, sched);
        opt.update(params, r.lr, cfg.weight_decay);
        if (metrics_csv) write_metrics_row(*metrics_csv, r);
    }
    return model;
}

}  // namespace arc
