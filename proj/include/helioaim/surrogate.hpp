#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace helioaim {

/// Aiming vectors and their quality scores, in physical (unscaled) units.
struct Dataset {
    Eigen::MatrixXd X;  // N x n0
    Eigen::VectorXd y;  // N
    double k_min = 0.0;
    double k_max = 3.0;

    int size() const { return static_cast<int>(X.rows()); }
    int dimension() const { return static_cast<int>(X.cols()); }

    /// Appends other (same dimension and k range).
    void append(const Dataset& other);

    /// CSV with header k0..k{n-1},qs.
    void write_csv(std::ostream& out) const;
    static Dataset read_csv(std::istream& in, double k_min, double k_max);
};

/// Min-max map of each input dimension onto [0, 1].
struct InputScaler {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    Eigen::VectorXd scale(const Eigen::VectorXd& x) const;
    Eigen::VectorXd unscale(const Eigen::VectorXd& xs) const;
};

struct TargetScaler {
    double mean = 0.0;
    double stddev = 1.0;

    double scale(double y) const { return (y - mean) / stddev; }
    double unscale(double ys) const { return mean + stddev * ys; }
};

/// Affine layer z = W a + b. lower/upper hold preactivation bounds once
/// computed.
struct DenseLayer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int inputs() const { return static_cast<int>(W.cols()); }
    int outputs() const { return static_cast<int>(W.rows()); }
};

/// Single-output feedforward network: rectifiers on every hidden layer,
/// identity on the output layer. Operates on scaled inputs and targets; the
/// scalers convert from and to aiming factors and quality scores.
class SurrogateModel {
public:
    static constexpr const char* kFormatVersion = "helio-aim-nn/1";

    SurrogateModel() = default;
    SurrogateModel(std::vector<DenseLayer> layers, InputScaler input, TargetScaler target);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const InputScaler& input_scaler() const { return input_; }
    const TargetScaler& target_scaler() const { return target_; }

    int input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
    int hidden_layers() const { return static_cast<int>(layers_.size()) - 1; }
    int hidden_neurons() const;
    std::vector<int> widths() const;
    bool has_bounds() const { return has_bounds_; }

    /// Unscaled aiming factors in, unscaled score out.
    double predict(std::span<const double> k) const;
    double predict_scaled(const Eigen::VectorXd& xs) const;

    struct Trace {
        std::vector<Eigen::VectorXd> z;  // preactivations per layer (last = output)
        std::vector<Eigen::VectorXd> a;  // activations per hidden layer
    };
    Trace forward(const Eigen::VectorXd& xs) const;

    /// Interval-arithmetic preactivation bounds over the scaled input box.
    void attach_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
    void attach_bounds();  // unit box

    std::string to_json() const;
    static SurrogateModel from_json(const std::string& text);

private:
    std::vector<DenseLayer> layers_;
    InputScaler input_;
    TargetScaler target_;
    bool has_bounds_ = false;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Layer-by-layer interval propagation of the preactivations over the box
/// [lo, hi] (scaled inputs); activation intervals are clipped at zero.
std::vector<std::vector<Interval>> compute_bounds(const SurrogateModel& model, const Eigen::VectorXd& lo,
                                                  const Eigen::VectorXd& hi);

struct TrainParams {
    std::vector<int> hidden{50};
    double learning_rate = 5e-4;
    int batch_size = 512;
    int max_epochs = 500;
    int patience = 20;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct TrainReport {
    int epochs = 0;
    int best_epoch = 0;
    double initial_validation_rmse = 0.0;  // unscaled, before the first update
    double validation_rmse = 0.0;          // unscaled, best epoch
    double train_rmse = 0.0;               // unscaled, best epoch
};

/// Mean-squared-error regression with Adam. Returns the weights of the best
/// validation epoch. Throws Error(TrainingDiverged) on a non-finite loss.
SurrogateModel train(const Dataset& data, const TrainParams& params, TrainReport* report = nullptr);

}  // namespace helioaim
