#include "gccpm/trainer.hpp"

#include "gccpm/checkpoint.hpp"
#include "gccpm/data.hpp"
#include "gccpm/error.hpp"
#include "gccpm/image.hpp"
#include "gccpm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace gccpm {

void TrainConfig::validate() const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid train config: " + what); };
    if (!(lr > 0.0) || !std::isfinite(lr))
        bad("lr must be > 0");
    if (max_iters < 0)
        bad("max_iters must be >= 0");
    if (!(lr_decay_factor >= 1.0))
        bad("lr_decay_factor must be >= 1");
    if (max_decays < 0)
        bad("max_decays must be >= 0");
    if (!(plateau_threshold >= 0.0 && plateau_threshold < 1.0))
        bad("plateau_threshold must be in [0, 1)");
    if (plateau_patience < 1)
        bad("plateau_patience must be >= 1");
    if (batch_size < 1)
        bad("batch_size must be >= 1");
    if (eval_interval < 1)
        bad("eval_interval must be >= 1");
}

std::string TrainHistory::to_csv() const
{
    std::ostringstream out;
    out.precision(9);
    out << "iteration,train_loss,val_loss,mean_pckh,lr\n";
    for (const auto& e : entries)
        out << e.iteration << "," << e.train_loss << "," << e.val_loss << "," << e.mean_pckh << "," << e.lr << "\n";
    return out.str();
}

bool TrainHistory::operator==(const TrainHistory& other) const
{
    if (entries.size() != other.entries.size())
        return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto &a = entries[i], &b = other.entries[i];
        if (a.iteration != b.iteration || a.train_loss != b.train_loss || a.val_loss != b.val_loss ||
            a.mean_pckh != b.mean_pckh || a.lr != b.lr)
            return false;
    }
    return true;
}

CodecConfig codec_for(const ModelConfig& cfg, double sigma)
{
    CodecConfig c;
    c.heatmap_size = cfg.heatmap_size;
    c.output_stride = cfg.output_stride;
    c.sigma = sigma;
    c.background = cfg.include_background_map;
    return c;
}

namespace {

struct Batch {
    Tensor images;
    Tensor targets;
    Tensor weights;
};

Batch make_batch(const std::vector<const Sample*>& samples, const CodecConfig& codec)
{
    std::vector<const Image*> images;
    const int n = static_cast<int>(samples.size());
    const int k = kNumKeypoints + (codec.background ? 1 : 0);
    const int h = codec.heatmap_size;
    Batch b;
    b.targets = Tensor({n, k, h, h});
    b.weights = Tensor({n, k});
    auto td = b.targets.mutable_data();
    auto wd = b.weights.mutable_data();
    const std::size_t per = static_cast<std::size_t>(k) * h * h;
    for (int i = 0; i < n; ++i) {
        images.push_back(&samples[i]->image);
        const Tensor t = encode_heatmaps(samples[i]->keypoints, codec);
        std::copy(t.data().begin(), t.data().end(), td.begin() + static_cast<std::ptrdiff_t>(i * per));
        for (int j = 0; j < k; ++j)
            wd[static_cast<std::size_t>(i) * k + j] =
                j >= kNumKeypoints || samples[i]->keypoints.points[j].visibility != Visibility::absent ? 1.0f : 0.0f;
    }
    b.images = images_to_tensor(images);
    return b;
}

void check_dataset(const ModelConfig& cfg, const std::vector<Sample>& set, const char* what)
{
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set[i].image.width != cfg.input_size || set[i].image.height != cfg.input_size)
            fail(ErrorKind::shape, std::string(what) + " sample " + std::to_string(i) + " is " +
                                       std::to_string(set[i].image.width) + "x" + std::to_string(set[i].image.height) +
                                       ", model expects " + std::to_string(cfg.input_size) + " px");
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out)
        fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
}

} // namespace

double dataset_loss(const Model& model, const std::vector<Sample>& samples, const CodecConfig& codec, int batch_size)
{
    if (samples.empty())
        fail(ErrorKind::config, "dataset_loss on an empty dataset");
    NoGradGuard guard;
    double total = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<const Sample*> chunk;
        for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i)
            chunk.push_back(&samples[i]);
        const Batch b = make_batch(chunk, codec);
        const auto stages = model.forward(b.images);
        // stage_loss averages over the batch; weight by the chunk size.
        total += static_cast<double>(stage_loss(stages, b.targets, std::optional<Tensor>(b.weights)).item()) *
                 static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(samples.size());
}

std::vector<double> per_stage_median_loss(const Model& model, const std::vector<Sample>& samples,
                                          const CodecConfig& codec)
{
    NoGradGuard guard;
    std::vector<std::vector<double>> per_stage;
    for (const auto& s : samples) {
        const Batch b = make_batch({&s}, codec);
        const auto stages = model.forward(b.images);
        per_stage.resize(stages.size());
        for (std::size_t i = 0; i < stages.size(); ++i)
            per_stage[i].push_back(stage_loss(std::vector<Tensor>{stages[i]}, b.targets, std::optional<Tensor>(b.weights)).item());
    }
    std::vector<double> out;
    for (auto& v : per_stage) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        out.push_back(n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
    }
    return out;
}

HeatmapFn final_stage_fn(const Model& model)
{
    return [&model](const Tensor& image) {
        NoGradGuard guard;
        return model.forward(image).back();
    };
}

EvalResult evaluate(const Model& model, const std::vector<Sample>& dataset, const CodecConfig& codec, bool use_flip,
                    const std::vector<double>& scales)
{
    if (dataset.empty())
        fail(ErrorKind::config, "evaluate on an empty dataset");
    for (double s : scales)
        if (!(s > 0.0))
            fail(ErrorKind::config, "evaluation scales must be positive");
    const auto fn = final_stage_fn(model);
    std::vector<KeypointSet> preds, gts;
    for (const auto& s : dataset) {
        if (!(s.keypoints.head_size > 0.0))
            fail(ErrorKind::config, "evaluation sample without a positive head_size");
        const Tensor img = image_to_tensor(s.image);
        Tensor maps;
        if (!scales.empty())
            maps = multiscale_average(fn, img, scales, codec, use_flip);
        else if (use_flip)
            maps = flip_average(fn, img, codec);
        else
            maps = fn(img);
        preds.push_back(decode_heatmaps(maps, codec));
        gts.push_back(s.keypoints);
    }
    return pckh(preds, gts);
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const CodecConfig& codec,
                  const AugmentConfig& augment_cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainOptions& options)
{
    model_cfg.validate();
    cfg.validate();
    codec.validate(model_cfg.num_keypoints);
    if (codec.heatmap_size != model_cfg.heatmap_size || codec.output_stride != model_cfg.output_stride ||
        codec.background != model_cfg.include_background_map)
        fail(ErrorKind::config, "codec heatmap geometry does not match the model config");
    if (cfg.augment) {
        augment_cfg.validate();
        if (augment_cfg.input_size != model_cfg.input_size)
            fail(ErrorKind::config, "augment.input_size must equal model.input_size");
    }
    if (train_set.empty())
        fail(ErrorKind::config, "training dataset is empty");
    check_dataset(model_cfg, train_set, "training");
    check_dataset(model_cfg, val_set, "validation");
    const auto& val = val_set.empty() ? train_set : val_set;

    TrainResult result;
    result.model = build_model(model_cfg);
    Model& model = result.model;
    if (!options.output_dir.empty())
        std::filesystem::create_directories(options.output_dir);
    if (cfg.max_iters == 0) {
        result.initial_train_loss = result.final_train_loss = dataset_loss(model, train_set, codec, cfg.batch_size);
        return result;
    }
    result.initial_train_loss = dataset_loss(model, train_set, codec, cfg.batch_size);

    model.set_requires_grad(true);
    auto params = model.parameter_tensors();
    AdamState<float> adam;
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;

    // Epoch-wise shuffled order; each augmented draw has its own derived stream.
    std::mt19937_64 order_rng(derive_seed(cfg.seed, 0x6f72646572ULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    double best_val = std::numeric_limits<double>::infinity();
    double plateau_ref = std::numeric_limits<double>::infinity();
    int since_improvement = 0, decays = 0;
    double interval_loss = 0.0;
    int interval_count = 0;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        std::vector<Sample> augmented;
        std::vector<const Sample*> batch;
        augmented.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            const Sample& s = train_set[order[cursor++]];
            if (cfg.augment) {
                std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it) * 1000003ULL + b));
                augmented.push_back(augment(s, rng, augment_cfg));
                batch.push_back(&augmented.back());
            } else {
                batch.push_back(&s);
            }
        }
        const Batch data = make_batch(batch, codec);
        const auto stages = model.forward(data.images);
        const Tensor loss = stage_loss(stages, data.targets, std::optional<Tensor>(data.weights));
        const double value = loss.item();
        if (!std::isfinite(value)) {
            const int layer = model.first_non_finite_layer(data.images);
            const std::string where =
                layer >= 0 ? "first non-finite layer '" + model.layers()[static_cast<std::size_t>(layer)].name + "'"
                           : "all layer outputs finite, loss itself overflowed";
            fail(ErrorKind::numeric, "training diverged at iteration " + std::to_string(it) + ": " + where);
        }
        model.zero_grad();
        backward(loss);
        adam_step(params, adam, adam_cfg);
        interval_loss += value;
        ++interval_count;

        if (it % cfg.eval_interval == 0 || it == cfg.max_iters) {
            HistoryEntry e;
            e.iteration = it;
            e.train_loss = interval_loss / interval_count;
            e.val_loss = dataset_loss(model, val, codec, cfg.batch_size);
            e.mean_pckh = evaluate(model, val, codec).mean_pckh;
            e.lr = adam_cfg.lr;
            result.history.entries.push_back(e);
            interval_loss = 0.0;
            interval_count = 0;
            if (options.on_eval)
                options.on_eval(e);

            if (e.val_loss < best_val) {
                best_val = e.val_loss;
                result.best_iteration = it;
                if (!options.output_dir.empty())
                    save_checkpoint(model, options.output_dir / "best.json");
            }
            if (e.val_loss < plateau_ref * (1.0 - cfg.plateau_threshold)) {
                plateau_ref = e.val_loss;
                since_improvement = 0;
            } else if (++since_improvement >= cfg.plateau_patience && decays < cfg.max_decays) {
                adam_cfg.lr /= cfg.lr_decay_factor;
                ++decays;
                since_improvement = 0;
            }
        }
    }

    result.final_train_loss = dataset_loss(model, train_set, codec, cfg.batch_size);
    if (!options.output_dir.empty()) {
        save_checkpoint(model, options.output_dir / "final.json");
        write_text(options.output_dir / "history.csv", result.history.to_csv());
    }
    return result;
}

} // namespace gccpm
