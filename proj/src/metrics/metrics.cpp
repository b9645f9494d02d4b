#include "gccpm/metrics.hpp"

#include "gccpm/ops.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gccpm {

template <class T>
basic_tensor<T> stage_loss(const std::vector<basic_tensor<T>>& stages, const basic_tensor<T>& gt,
                           const std::optional<basic_tensor<T>>& weights)
{
    if (stages.empty())
        fail(ErrorKind::shape, "stage_loss: no stages");
    basic_tensor<T> total;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        if (stages[s].shape() != gt.shape())
            fail(ErrorKind::shape, "stage_loss: stage " + std::to_string(s) + " has shape " +
                                       shape_string(stages[s].shape()) + ", ground truth " + shape_string(gt.shape()));
        auto l = weighted_squared_error(stages[s], gt, weights);
        total = total.defined() ? add(total, l) : l;
    }
    return total;
}

template Tensor stage_loss<float>(const std::vector<Tensor>&, const Tensor&, const std::optional<Tensor>&);
template Tensor64 stage_loss<double>(const std::vector<Tensor64>&, const Tensor64&, const std::optional<Tensor64>&);

std::vector<double> default_alpha_grid()
{
    std::vector<double> grid;
    for (int i = 0; i <= 50; ++i)
        grid.push_back(i / 100.0);
    return grid;
}

namespace {

struct Tally {
    std::vector<int> correct;
    std::vector<int> counted;
};

Tally tally(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts, double alpha)
{
    if (preds.size() != gts.size())
        fail(ErrorKind::shape, "pckh: " + std::to_string(preds.size()) + " predictions for " +
                                   std::to_string(gts.size()) + " ground truths");
    std::size_t joints = gts.empty() ? kNumKeypoints : gts.front().points.size();
    Tally t{std::vector<int>(joints, 0), std::vector<int>(joints, 0)};
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const auto& gt = gts[i];
        const auto& pr = preds[i];
        if (!(gt.head_size > 0.0))
            fail(ErrorKind::config, "pckh: sample " + std::to_string(i) + " has no positive head_size");
        if (gt.points.size() != joints || pr.points.size() < joints)
            fail(ErrorKind::shape, "pckh: sample " + std::to_string(i) + " has a mismatched keypoint count");
        for (std::size_t j = 0; j < joints; ++j) {
            if (gt.points[j].visibility == Visibility::absent)
                continue;
            const double d = std::hypot(pr.points[j].x - gt.points[j].x, pr.points[j].y - gt.points[j].y);
            ++t.counted[j];
            if (d <= alpha * gt.head_size)
                ++t.correct[j];
        }
    }
    return t;
}

double pooled_rate(const Tally& t)
{
    long correct = 0, counted = 0;
    for (std::size_t j = 0; j < t.counted.size(); ++j) {
        correct += t.correct[j];
        counted += t.counted[j];
    }
    return counted ? static_cast<double>(correct) / counted : 0.0;
}

} // namespace

EvalResult pckh(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts, double alpha)
{
    const Tally t = tally(preds, gts, alpha);
    EvalResult r;
    r.alpha = alpha;
    r.num_samples = static_cast<int>(gts.size());
    r.per_joint_count = t.counted;
    for (std::size_t j = 0; j < t.counted.size(); ++j)
        r.per_joint_pckh.push_back(t.counted[j] ? static_cast<double>(t.correct[j]) / t.counted[j] : 0.0);
    r.mean_pckh = pooled_rate(t);
    r.auc = auc(preds, gts);
    return r;
}

double auc(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts,
           const std::vector<double>& alpha_grid)
{
    if (alpha_grid.empty())
        fail(ErrorKind::config, "auc: empty alpha grid");
    double total = 0.0;
    for (double a : alpha_grid)
        total += pooled_rate(tally(preds, gts, a));
    return total / alpha_grid.size();
}

namespace {

std::string joint_label(std::size_t j)
{
    const auto& names = keypoint_names();
    return j < names.size() ? names[j] : "joint" + std::to_string(j);
}

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string EvalResult::csv_header() const
{
    std::string h = "num_samples,alpha,mean_pckh,auc";
    for (std::size_t j = 0; j < per_joint_pckh.size(); ++j)
        h += ",pckh_" + joint_label(j);
    return h;
}

std::string EvalResult::csv_row() const
{
    std::string r = std::to_string(num_samples) + "," + fixed(alpha, 2) + "," + fixed(mean_pckh, 6) + "," +
                    fixed(auc, 6);
    for (double v : per_joint_pckh)
        r += "," + fixed(v, 6);
    return r;
}

std::string EvalResult::format_table() const
{
    std::ostringstream out;
    char line[96];
    std::snprintf(line, sizeof line, "%-12s %9s %6s\n", "joint", "PCKh", "n");
    out << line;
    for (std::size_t j = 0; j < per_joint_pckh.size(); ++j) {
        std::snprintf(line, sizeof line, "%-12s %8.2f%% %6d\n", joint_label(j).c_str(), 100.0 * per_joint_pckh[j],
                      j < per_joint_count.size() ? per_joint_count[j] : 0);
        out << line;
    }
    std::snprintf(line, sizeof line, "%-12s %8.2f%% %6d\n", "mean", 100.0 * mean_pckh, num_samples);
    out << line;
    std::snprintf(line, sizeof line, "%-12s %8.2f%%\n", "auc", 100.0 * auc);
    out << line;
    return out.str();
}

} // namespace gccpm
