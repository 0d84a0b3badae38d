#include "hunet/train.hpp"

#include <algorithm>
#include <cmath>

namespace hunet {

namespace {

const char* first_nonfinite(double kl, double sp, double tv, double mse) {
    if (!std::isfinite(kl)) return "kl_gaussian";
    if (!std::isfinite(sp)) return "kl_sparsity";
    if (!std::isfinite(tv)) return "tv";
    if (!std::isfinite(mse)) return "mse";
    return nullptr;
}

} // namespace

TrainResult train(const std::vector<TrainPair>& data, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const std::optional<ModelParams>& resume,
                  const std::function<void(const EpochRecord&, const ModelParams&)>& on_epoch, int max_steps) {
    if (data.empty()) throw ContractError("train: empty dataset");
    if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0) throw ContractError("train: invalid config");
    require_pow2(cfg.image_size, "train image size");
    const int m = cfg.image_size;
    const std::int64_t plane = static_cast<std::int64_t>(m) * m;
    for (const TrainPair& p : data)
        if (static_cast<std::int64_t>(p.x.size()) != plane || static_cast<std::int64_t>(p.y.size()) != plane)
            throw DimensionError("train: sample does not match configured image size");

    Rng master(cfg.seed);
    TrainResult result;
    if (resume) {
        if (resume->cfg.image_size != m) throw DimensionError("train: resume checkpoint has a different image size");
        result.params = *resume;
    } else {
        ModelConfig mc;
        mc.image_size = m;
        mc.latent_dim = cfg.latent_dim;
        Rng init_rng = master.split(0x1717);
        result.params = init_model(mc, init_rng);
    }
    const int d = result.params.cfg.latent_dim;

    // normalize once, with each pair sharing the input slice's transform
    std::vector<TrainPair> normed(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const SliceNorm n = slice_norm(data[i].x);
        normed[i].x = apply_norm(data[i].x, n);
        normed[i].y = apply_norm(data[i].y, n);
    }

    AdamWConfig ocfg;
    ocfg.lr = cfg.learning_rate;
    ocfg.weight_decay = cfg.weight_decay;
    AdamW opt(ocfg);

    const int first_epoch = result.params.epoch + 1;
    int steps_done = 0;
    for (int epoch = first_epoch; epoch < first_epoch + cfg.epochs; ++epoch) {
        Rng erng = master.split(static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[erng.below(i)]);

        EpochRecord rec;
        rec.epoch = epoch;
        std::int64_t seen = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            if (max_steps > 0 && steps_done >= max_steps) break;
            const int b = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
            Tensor xb({b, 1, m, m}), yb({b, 1, m, m}), eps({b, d});
            for (int i = 0; i < b; ++i) {
                const TrainPair& p = normed[order[start + i]];
                std::copy(p.x.begin(), p.x.end(), xb.data.begin() + i * plane);
                std::copy(p.y.begin(), p.y.end(), yb.data.begin() + i * plane);
            }
            for (auto& v : eps.data) v = erng.normal();

            Graph g;
            ModelVars vars = register_model(g, result.params);
            auto out = training_graph(g.input(std::move(xb)), g.input(std::move(yb)),
                                      g.input(std::move(eps)), vars, cfg.weights);

            const double kl = g.value(out.kl_latent).data[0];
            const double sp = g.value(out.sparsity).data[0];
            const double tv = g.value(out.tv).data[0];
            const double mse = g.value(out.mse).data[0];
            if (const char* bad = first_nonfinite(kl, sp, tv, mse))
                throw NonFiniteError(std::string(bad) + " at epoch " + std::to_string(epoch));

            g.backward(out.loss);

            std::vector<Tensor*> prms;
            result.params.for_each(
                [&](const std::string&, const Tensor& t) { prms.push_back(&const_cast<Tensor&>(t)); });
            std::vector<const Tensor*> grads;
            visit_params(vars, [&](const std::string&, Var& v) { grads.push_back(&g.grad(v)); });
            opt.step(prms, grads);
            ++steps_done;

            rec.kl_latent += cfg.weights.lambda_kl * kl * b;
            rec.sparsity += cfg.weights.lambda_sparsity * sp * b;
            rec.tv += cfg.weights.lambda_tv * tv * b;
            rec.mse += cfg.weights.lambda_mse * mse * b;
            seen += b;
        }
        if (seen == 0) break; // step cap reached before this epoch did any work
        rec.kl_latent /= static_cast<double>(seen);
        rec.sparsity /= static_cast<double>(seen);
        rec.tv /= static_cast<double>(seen);
        rec.mse /= static_cast<double>(seen);
        rec.total = rec.kl_latent + rec.sparsity + rec.tv + rec.mse;

        result.params.epoch = epoch;
        bool finite = true;
        result.params.for_each([&](const std::string&, const Tensor& t) { finite = finite && t.all_finite(); });
        if (!finite) throw NonFiniteError("parameters after epoch " + std::to_string(epoch));

        result.history.push_back(rec);
        if (!checkpoint_path.empty()) save_checkpoint(result.params, checkpoint_path);
        if (on_epoch) on_epoch(rec, result.params);
        if (max_steps > 0 && steps_done >= max_steps) break;
    }
    return result;
}

} // namespace hunet
