#include "helioaim/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "helioaim/error.hpp"
#include "helioaim/rng.hpp"

namespace helioaim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

void Dataset::append(const Dataset& other) {
    if (other.size() == 0) return;
    if (size() == 0) {
        *this = other;
        return;
    }
    if (other.dimension() != dimension()) fail(ErrorKind::Shape, "dataset dimension mismatch");
    MatrixXd X2(size() + other.size(), dimension());
    X2 << X, other.X;
    VectorXd y2(size() + other.size());
    y2 << y, other.y;
    X = std::move(X2);
    y = std::move(y2);
}

void Dataset::write_csv(std::ostream& out) const {
    for (int j = 0; j < dimension(); ++j) out << 'k' << j << ',';
    out << "qs\n";
    out.precision(17);
    for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < dimension(); ++j) out << X(i, j) << ',';
        out << y(i) << '\n';
    }
}

Dataset Dataset::read_csv(std::istream& in, double k_min, double k_max) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Io, "dataset csv: empty input");
    const auto columns = std::count(line.begin(), line.end(), ',') + 1;
    if (columns < 2) fail(ErrorKind::Io, "dataset csv: need at least one input column and qs");
    const int dim = static_cast<int>(columns - 1);

    std::vector<double> values;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream row(line);
        std::string cell;
        int count = 0;
        while (std::getline(row, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(ErrorKind::Io, "dataset csv: bad number '" + cell + "'");
            }
            ++count;
        }
        if (count != dim + 1) fail(ErrorKind::Io, "dataset csv: ragged row");
        ++rows;
    }

    Dataset d;
    d.k_min = k_min;
    d.k_max = k_max;
    d.X.resize(rows, dim);
    d.y.resize(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < dim; ++j) d.X(i, j) = values[static_cast<std::size_t>(i) * (dim + 1) + j];
        d.y(i) = values[static_cast<std::size_t>(i) * (dim + 1) + dim];
    }
    return d;
}

VectorXd InputScaler::scale(const VectorXd& x) const {
    return ((x - lo).array() / (hi - lo).array()).matrix();
}

VectorXd InputScaler::unscale(const VectorXd& xs) const {
    return (lo.array() + xs.array() * (hi - lo).array()).matrix();
}

SurrogateModel::SurrogateModel(std::vector<DenseLayer> layers, InputScaler input, TargetScaler target)
    : layers_(std::move(layers)), input_(std::move(input)), target_(target) {
    if (layers_.empty()) fail(ErrorKind::Shape, "network needs at least one layer");
    for (std::size_t l = 1; l < layers_.size(); ++l)
        if (layers_[l].inputs() != layers_[l - 1].outputs()) fail(ErrorKind::Shape, "layer widths do not chain");
    if (layers_.back().outputs() != 1) fail(ErrorKind::Shape, "network must have a single output");
    if (input_.lo.size() != input_dim() || input_.hi.size() != input_dim())
        fail(ErrorKind::Shape, "input scaler dimension mismatch");
    if (!((input_.hi - input_.lo).array() > 0.0).all()) fail(ErrorKind::Shape, "input scaler needs hi > lo");
    if (!(target_.stddev > 0.0)) fail(ErrorKind::Shape, "target scaler needs stddev > 0");
    has_bounds_ = std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
        return l.lower.size() == l.outputs() && l.upper.size() == l.outputs();
    });
}

int SurrogateModel::hidden_neurons() const {
    int n = 0;
    for (int l = 0; l < hidden_layers(); ++l) n += layers_[l].outputs();
    return n;
}

std::vector<int> SurrogateModel::widths() const {
    std::vector<int> w{input_dim()};
    for (const auto& l : layers_) w.push_back(l.outputs());
    return w;
}

SurrogateModel::Trace SurrogateModel::forward(const VectorXd& xs) const {
    if (xs.size() != input_dim()) fail(ErrorKind::Shape, "input dimension mismatch");
    Trace t;
    VectorXd a = xs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        VectorXd z = layers_[l].W * a + layers_[l].b;
        t.z.push_back(z);
        if (l + 1 < layers_.size()) {
            a = z.cwiseMax(0.0);
            t.a.push_back(a);
        }
    }
    return t;
}

double SurrogateModel::predict_scaled(const VectorXd& xs) const {
    if (xs.size() != input_dim()) fail(ErrorKind::Shape, "input dimension mismatch");
    VectorXd a = xs;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) a = (layers_[l].W * a + layers_[l].b).cwiseMax(0.0);
    return (layers_.back().W * a + layers_.back().b)(0);
}

double SurrogateModel::predict(std::span<const double> k) const {
    if (static_cast<int>(k.size()) != input_dim())
        fail(ErrorKind::Shape, "aim vector length does not match network input");
    const VectorXd x = Eigen::Map<const VectorXd>(k.data(), static_cast<Eigen::Index>(k.size()));
    return target_.unscale(predict_scaled(input_.scale(x)));
}

std::vector<std::vector<Interval>> compute_bounds(const SurrogateModel& model, const VectorXd& lo,
                                                  const VectorXd& hi) {
    if (lo.size() != model.input_dim() || hi.size() != model.input_dim())
        fail(ErrorKind::Shape, "bound box dimension mismatch");
    if (!(lo.array() <= hi.array()).all()) fail(ErrorKind::Usage, "bound box needs lo <= hi");

    std::vector<std::vector<Interval>> bounds;
    VectorXd a_lo = lo, a_hi = hi;
    for (const auto& layer : model.layers()) {
        const MatrixXd Wp = layer.W.cwiseMax(0.0);
        const MatrixXd Wn = layer.W.cwiseMin(0.0);
        const VectorXd z_lo = Wp * a_lo + Wn * a_hi + layer.b;
        const VectorXd z_hi = Wp * a_hi + Wn * a_lo + layer.b;
        std::vector<Interval> layer_bounds(layer.outputs());
        for (int j = 0; j < layer.outputs(); ++j) layer_bounds[j] = {z_lo(j), z_hi(j)};
        bounds.push_back(std::move(layer_bounds));
        a_lo = z_lo.cwiseMax(0.0);
        a_hi = z_hi.cwiseMax(0.0);
    }
    return bounds;
}

void SurrogateModel::attach_bounds(const VectorXd& lo, const VectorXd& hi) {
    const auto bounds = compute_bounds(*this, lo, hi);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& layer = layers_[l];
        layer.lower.resize(layer.outputs());
        layer.upper.resize(layer.outputs());
        for (int j = 0; j < layer.outputs(); ++j) {
            layer.lower(j) = bounds[l][j].lo;
            layer.upper(j) = bounds[l][j].hi;
        }
    }
    has_bounds_ = true;
}

void SurrogateModel::attach_bounds() {
    attach_bounds(VectorXd::Zero(input_dim()), VectorXd::Ones(input_dim()));
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_vec(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string SurrogateModel::to_json() const {
    json j;
    j["version"] = kFormatVersion;
    j["layer_widths"] = widths();
    j["activation"] = {{"hidden", "relu"}, {"output", "identity"}};
    j["input_scaler"] = {{"lo", to_vec(input_.lo)}, {"hi", to_vec(input_.hi)}};
    j["target_scaler"] = {{"mean", target_.mean}, {"std", target_.stddev}};
    json layers = json::array();
    for (const auto& l : layers_) {
        // row-major weights
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.W.size()));
        for (int r = 0; r < l.W.rows(); ++r)
            for (int c = 0; c < l.W.cols(); ++c) w.push_back(l.W(r, c));
        json lj = {{"weights", w}, {"biases", to_vec(l.b)}};
        if (has_bounds_) {
            lj["lower"] = to_vec(l.lower);
            lj["upper"] = to_vec(l.upper);
        } else {
            lj["lower"] = nullptr;
            lj["upper"] = nullptr;
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

SurrogateModel SurrogateModel::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Io, std::string("model json: ") + e.what());
    }
    try {
        if (j.at("version").get<std::string>() != kFormatVersion)
            fail(ErrorKind::Io, "model json: unsupported version");
        const auto widths = j.at("layer_widths").get<std::vector<int>>();
        const auto& layers_json = j.at("layers");
        if (widths.size() < 2 || layers_json.size() != widths.size() - 1)
            fail(ErrorKind::Io, "model json: layer count does not match widths");

        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const auto& lj = layers_json[l];
            const auto w = lj.at("weights").get<std::vector<double>>();
            const auto b = lj.at("biases").get<std::vector<double>>();
            const int rows = widths[l + 1], cols = widths[l];
            if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows)
                fail(ErrorKind::Io, "model json: weight shape mismatch");
            DenseLayer layer;
            layer.W.resize(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) layer.W(r, c) = w[static_cast<std::size_t>(r) * cols + c];
            layer.b = from_vec(b);
            if (lj.contains("lower") && !lj["lower"].is_null()) {
                layer.lower = from_vec(lj["lower"].get<std::vector<double>>());
                layer.upper = from_vec(lj.at("upper").get<std::vector<double>>());
            }
            layers.push_back(std::move(layer));
        }
        InputScaler in{from_vec(j.at("input_scaler").at("lo").get<std::vector<double>>()),
                       from_vec(j.at("input_scaler").at("hi").get<std::vector<double>>())};
        TargetScaler out{j.at("target_scaler").at("mean").get<double>(),
                         j.at("target_scaler").at("std").get<double>()};
        return SurrogateModel(std::move(layers), std::move(in), out);
    } catch (const json::exception& e) {
        fail(ErrorKind::Io, std::string("model json: ") + e.what());
    }
}

namespace {

struct AdamState {
    std::vector<MatrixXd> mW, vW;
    std::vector<VectorXd> mb, vb;
    int step = 0;
};

double mse(const SurrogateModel& model, const MatrixXd& Xs, const VectorXd& ys) {
    if (Xs.cols() == 0) return 0.0;
    MatrixXd a = Xs;
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        MatrixXd z = (layers[l].W * a).colwise() + layers[l].b;
        a = (l + 1 < layers.size()) ? MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return (a.row(0).transpose() - ys).squaredNorm() / static_cast<double>(ys.size());
}

}  // namespace

SurrogateModel train(const Dataset& data, const TrainParams& params, TrainReport* report) {
    const int n = data.size();
    const int dim = data.dimension();
    if (n < 2) fail(ErrorKind::Usage, "training needs at least two samples");
    if (dim < 1) fail(ErrorKind::Shape, "training data has no input columns");
    if (!(data.k_max > data.k_min)) fail(ErrorKind::Usage, "dataset k range is empty");
    if (params.batch_size < 1 || params.max_epochs < 0 || params.learning_rate <= 0.0)
        fail(ErrorKind::Usage, "invalid training hyperparameters");
    for (int w : params.hidden)
        if (w < 1) fail(ErrorKind::Usage, "hidden layer width must be >= 1");

    InputScaler in{VectorXd::Constant(dim, data.k_min), VectorXd::Constant(dim, data.k_max)};
    TargetScaler out;
    out.mean = data.y.mean();
    const double var = (data.y.array() - out.mean).square().mean();
    out.stddev = var > 0.0 ? std::sqrt(var) : 1.0;

    // Scaled data, one sample per column.
    MatrixXd Xs(dim, n);
    VectorXd ys(n);
    for (int i = 0; i < n; ++i) {
        Xs.col(i) = in.scale(data.X.row(i).transpose());
        ys(i) = out.scale(data.y(i));
    }

    Rng rng(params.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);

    int n_val = static_cast<int>(std::floor(n * params.validation_fraction));
    if (n - n_val < 1) n_val = n - 1;
    const int n_train = n - n_val;
    MatrixXd Xt(dim, n_train), Xv(dim, std::max(n_val, 0));
    VectorXd yt(n_train), yv(std::max(n_val, 0));
    for (int i = 0; i < n_train; ++i) {
        Xt.col(i) = Xs.col(order[i]);
        yt(i) = ys(order[i]);
    }
    for (int i = 0; i < n_val; ++i) {
        Xv.col(i) = Xs.col(order[n_train + i]);
        yv(i) = ys(order[n_train + i]);
    }
    // Without a validation split the training loss selects the epoch.
    const MatrixXd& Xsel = n_val > 0 ? Xv : Xt;
    const VectorXd& ysel = n_val > 0 ? yv : yt;

    std::vector<DenseLayer> layers;
    std::vector<int> widths{dim};
    widths.insert(widths.end(), params.hidden.begin(), params.hidden.end());
    widths.push_back(1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        layer.W.resize(widths[l + 1], widths[l]);
        layer.b.resize(widths[l + 1]);
        for (int r = 0; r < layer.W.rows(); ++r)
            for (int c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = rng.uniform(-bound, bound);
        for (int r = 0; r < layer.b.size(); ++r) layer.b(r) = rng.uniform(-bound, bound);
        layers.push_back(std::move(layer));
    }
    SurrogateModel model(std::move(layers), in, out);

    AdamState adam;
    for (const auto& l : model.layers()) {
        adam.mW.push_back(MatrixXd::Zero(l.W.rows(), l.W.cols()));
        adam.vW.push_back(MatrixXd::Zero(l.W.rows(), l.W.cols()));
        adam.mb.push_back(VectorXd::Zero(l.b.size()));
        adam.vb.push_back(VectorXd::Zero(l.b.size()));
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    double best_loss = mse(model, Xsel, ysel);
    if (!std::isfinite(best_loss)) fail(ErrorKind::TrainingDiverged, "non-finite initial loss");
    const double initial_loss = best_loss;
    SurrogateModel best = model;
    int best_epoch = 0, since_best = 0, epochs_run = 0;

    std::vector<int> perm(n_train);
    std::iota(perm.begin(), perm.end(), 0);
    const std::size_t L = model.layers().size();
    std::vector<MatrixXd> zs(L), as(L + 1);

    for (int epoch = 1; epoch <= params.max_epochs; ++epoch) {
        for (int i = n_train - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);

        for (int start = 0; start < n_train; start += params.batch_size) {
            const int bs = std::min(params.batch_size, n_train - start);
            MatrixXd xb(dim, bs);
            VectorXd yb(bs);
            for (int i = 0; i < bs; ++i) {
                xb.col(i) = Xt.col(perm[start + i]);
                yb(i) = yt(perm[start + i]);
            }

            auto& layers = model.layers();
            as[0] = xb;
            for (std::size_t l = 0; l < L; ++l) {
                zs[l] = (layers[l].W * as[l]).colwise() + layers[l].b;
                as[l + 1] = (l + 1 < L) ? MatrixXd(zs[l].cwiseMax(0.0)) : zs[l];
            }
            MatrixXd delta = (2.0 / bs) * (as[L].row(0) - yb.transpose());
            ++adam.step;
            const double c1 = 1.0 - std::pow(beta1, adam.step);
            const double c2 = 1.0 - std::pow(beta2, adam.step);
            for (std::size_t li = L; li-- > 0;) {
                const MatrixXd gW = delta * as[li].transpose();
                const VectorXd gb = delta.rowwise().sum();
                if (li > 0) {
                    MatrixXd back = layers[li].W.transpose() * delta;
                    delta = back.cwiseProduct((zs[li - 1].array() > 0.0).cast<double>().matrix());
                }
                adam.mW[li] = beta1 * adam.mW[li] + (1.0 - beta1) * gW;
                adam.vW[li] = beta2 * adam.vW[li] + (1.0 - beta2) * gW.cwiseProduct(gW);
                adam.mb[li] = beta1 * adam.mb[li] + (1.0 - beta1) * gb;
                adam.vb[li] = beta2 * adam.vb[li] + (1.0 - beta2) * gb.cwiseProduct(gb);
                layers[li].W.array() -= params.learning_rate * (adam.mW[li].array() / c1) /
                                        ((adam.vW[li].array() / c2).sqrt() + eps);
                layers[li].b.array() -= params.learning_rate * (adam.mb[li].array() / c1) /
                                        ((adam.vb[li].array() / c2).sqrt() + eps);
            }
        }

        epochs_run = epoch;
        const double loss = mse(model, Xsel, ysel);
        if (!std::isfinite(loss)) fail(ErrorKind::TrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch));
        if (loss < best_loss) {
            best_loss = loss;
            best = model;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= params.patience) {
            break;
        }
    }

    if (report) {
        report->epochs = epochs_run;
        report->best_epoch = best_epoch;
        report->initial_validation_rmse = std::sqrt(initial_loss) * out.stddev;
        report->validation_rmse = std::sqrt(best_loss) * out.stddev;
        report->train_rmse = std::sqrt(mse(best, Xt, yt)) * out.stddev;
    }
    return best;
}

}  // namespace helioaim
