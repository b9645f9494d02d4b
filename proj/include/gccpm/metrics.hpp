#pragma once

#include "gccpm/codec.hpp"
#include "gccpm/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gccpm {

/// Sum over stages of the per-stage heatmap loss
/// (1/N) * sum_n w_n * sum_{x,y} (G_n - P_n)^2, averaged over the batch.
/// Stages and gt are B x K x h x h; weights is B x K (absent keypoints 0).
template <class T>
basic_tensor<T> stage_loss(const std::vector<basic_tensor<T>>& stages, const basic_tensor<T>& gt,
                           const std::optional<basic_tensor<T>>& weights = std::nullopt);

struct EvalResult {
    std::vector<double> per_joint_pckh;
    // Number of non-absent ground-truth joints behind each per-joint rate.
    std::vector<int> per_joint_count;
    double mean_pckh = 0.0;
    double auc = 0.0;
    int num_samples = 0;
    double alpha = 0.5;

    std::string csv_header() const;
    std::string csv_row() const;
    /// Aligned two-column table: joint name, PCKh in percent; then mean and AUC.
    std::string format_table() const;
};

/// Alpha grid 0.00, 0.01, ..., 0.50.
std::vector<double> default_alpha_grid();

/// A joint is correct iff its distance to the truth is <= alpha * head_size.
/// Absent ground-truth joints are skipped; occluded ones count. The mean rate
/// pools all counted joints. The auc field is filled over default_alpha_grid().
EvalResult pckh(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts, double alpha = 0.5);

/// Simple (non-trapezoid) mean of mean-PCKh over the grid.
double auc(const std::vector<KeypointSet>& preds, const std::vector<KeypointSet>& gts,
           const std::vector<double>& alpha_grid = default_alpha_grid());

} // namespace gccpm
