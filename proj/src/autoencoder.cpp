#include "irm/autoencoder.hpp"

#include "irm/error.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace irm {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

AutoencoderModel::AutoencoderModel(std::vector<std::size_t> layer_sizes) : layer_sizes_(std::move(layer_sizes)) {
    if (layer_sizes_.size() < 2) throw Error(ErrorCode::ShapeMismatch, "autoencoder needs at least two layers");
    for (std::size_t i = 0; i + 1 < layer_sizes_.size(); ++i) {
        DenseLayer l;
        l.in = layer_sizes_[i];
        l.out = layer_sizes_[i + 1];
        l.weights.assign(l.in * l.out, 0.0);
        l.bias.assign(l.out, 0.0);
        layers_.push_back(std::move(l));
    }
}

AutoencoderModel AutoencoderModel::initialise(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
    AutoencoderModel m(std::move(layer_sizes));
    std::mt19937_64 rng(seed);
    for (auto& l : m.layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& w : l.weights) w = dist(rng);
    }
    return m;
}

std::vector<std::vector<double>> AutoencoderModel::forward_all(std::span<const double> input) const {
    if (input.size() != input_size()) {
        throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(input.size()) + " values, model expects " +
                                                  std::to_string(input_size()));
    }
    std::vector<std::vector<double>> acts;
    acts.reserve(layers_.size() + 1);
    acts.emplace_back(input.begin(), input.end());
    for (const auto& l : layers_) {
        const auto& prev = acts.back();
        std::vector<double> next(l.out);
        for (std::size_t o = 0; o < l.out; ++o) {
            double z = l.bias[o];
            const double* row = l.weights.data() + o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) z += row[i] * prev[i];
            next[o] = sigmoid(z);
        }
        acts.push_back(std::move(next));
    }
    return acts;
}

std::vector<double> AutoencoderModel::forward(std::span<const double> input) const {
    auto acts = forward_all(input);
    return std::move(acts.back());
}

std::string AutoencoderModel::to_json_text() const {
    nlohmann::ordered_json doc;
    doc["schema_version"] = schema_version;
    doc["version"] = version;
    doc["trained_on"] = trained_on;
    doc["layer_sizes"] = layer_sizes_;
    doc["calibration"] = {{"err_p05", calibration.err_p05},
                          {"err_p95", calibration.err_p95},
                          {"calibrated", calibration.calibrated}};
    auto layers = nlohmann::ordered_json::array();
    for (const auto& l : layers_) {
        layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
    }
    doc["layers"] = std::move(layers);
    return doc.dump();
}

AutoencoderModel AutoencoderModel::from_json_text(const std::string& text) {
    try {
        auto doc = nlohmann::json::parse(text);
        AutoencoderModel m(doc.at("layer_sizes").get<std::vector<std::size_t>>());
        m.schema_version = doc.at("schema_version").get<int>();
        m.version = doc.at("version").get<std::uint64_t>();
        m.trained_on = doc.at("trained_on").get<std::uint64_t>();
        const auto& cal = doc.at("calibration");
        m.calibration.err_p05 = cal.at("err_p05").get<double>();
        m.calibration.err_p95 = cal.at("err_p95").get<double>();
        m.calibration.calibrated = cal.at("calibrated").get<bool>();
        const auto& layers = doc.at("layers");
        if (layers.size() != m.layers_.size()) throw Error(ErrorCode::ShapeMismatch, "layer count mismatch");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& l = m.layers_[i];
            auto w = layers[i].at("weights").get<std::vector<double>>();
            auto b = layers[i].at("bias").get<std::vector<double>>();
            if (w.size() != l.weights.size() || b.size() != l.bias.size()) {
                throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " shape mismatch");
            }
            l.weights = std::move(w);
            l.bias = std::move(b);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("model checkpoint: ") + e.what());
    }
}

void AutoencoderModel::save(const std::filesystem::path& path) const {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
        out << to_json_text();
    }
    std::filesystem::rename(tmp, path);
}

AutoencoderModel AutoencoderModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

double reconstruction_error(std::span<const double> v, std::span<const double> reconstruction) {
    if (v.size() != reconstruction.size()) throw Error(ErrorCode::ShapeMismatch, "length mismatch");
    if (v.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - reconstruction[i];
        sum += d * d;
    }
    return sum / static_cast<double>(v.size());
}

double normalize_error(double err, const Calibration& cal) {
    if (!cal.calibrated || !(cal.err_p95 > cal.err_p05)) {
        throw Error(ErrorCode::UncalibratedModel, "model has no calibration");
    }
    return std::clamp((err - cal.err_p05) / (cal.err_p95 - cal.err_p05), 0.0, 1.0);
}

double loss_and_gradient(const AutoencoderModel& model, std::span<const TrainingSample> samples,
                         const Calibration& cal, Gradient* grad) {
    const auto& layers = model.layers();
    if (grad) {
        grad->layers = layers;
        for (auto& l : grad->layers) {
            std::fill(l.weights.begin(), l.weights.end(), 0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
    }
    double total_weight = 0.0;
    for (const auto& s : samples) total_weight += s.weight;
    if (samples.empty() || total_weight <= 0.0) return 0.0;
    const double range = cal.err_p95 - cal.err_p05;

    double loss = 0.0;
    std::vector<double> delta;
    std::vector<double> prev_delta;
    for (const auto& s : samples) {
        const auto acts = model.forward_all(s.x);
        const auto& y = acts.back();
        const double mse = reconstruction_error(s.x, y);
        const double w = s.weight / total_weight;

        // dLoss/dmse for this sample.
        double dmse = 0.0;
        if (s.target_score) {
            if (!(range > 0)) throw Error(ErrorCode::UncalibratedModel, "targeted sample without calibration");
            const double score = (mse - cal.err_p05) / range;
            const double gap = score - *s.target_score;
            loss += w * gap * gap;
            dmse = w * 2.0 * gap / range;
        } else {
            loss += w * mse;
            dmse = w;
        }
        if (!grad) continue;

        // Backpropagate through the sigmoid stack.
        const std::size_t d = y.size();
        delta.assign(d, 0.0);
        for (std::size_t k = 0; k < d; ++k) {
            const double dy = dmse * 2.0 * (y[k] - s.x[k]) / static_cast<double>(d);
            delta[k] = dy * y[k] * (1.0 - y[k]);
        }
        for (std::size_t li = layers.size(); li-- > 0;) {
            const auto& l = layers[li];
            const auto& input = acts[li];
            auto& g = grad->layers[li];
            for (std::size_t o = 0; o < l.out; ++o) {
                g.bias[o] += delta[o];
                double* grow = g.weights.data() + o * l.in;
                for (std::size_t i = 0; i < l.in; ++i) grow[i] += delta[o] * input[i];
            }
            if (li == 0) break;
            prev_delta.assign(l.in, 0.0);
            for (std::size_t o = 0; o < l.out; ++o) {
                const double* row = l.weights.data() + o * l.in;
                for (std::size_t i = 0; i < l.in; ++i) prev_delta[i] += row[i] * delta[o];
            }
            for (std::size_t i = 0; i < l.in; ++i) prev_delta[i] *= input[i] * (1.0 - input[i]);
            delta.swap(prev_delta);
        }
    }
    return loss;
}

std::vector<double> train(AutoencoderModel& model, std::span<const TrainingSample> samples, const Calibration& cal,
                          const TrainHyper& hyper) {
    std::vector<double> history;
    if (samples.empty()) return history;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(hyper.seed);
    const std::size_t batch = hyper.batch == 0 ? samples.size() : std::min(hyper.batch, samples.size());

    Gradient grad;
    std::vector<TrainingSample> chunk;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        history.push_back(loss_and_gradient(model, samples, cal, nullptr));
        if (batch < samples.size()) std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < samples.size(); start += batch) {
            const std::size_t stop = std::min(samples.size(), start + batch);
            std::span<const TrainingSample> view;
            if (batch == samples.size()) {
                view = samples;
            } else {
                chunk.clear();
                for (std::size_t k = start; k < stop; ++k) chunk.push_back(samples[order[k]]);
                view = chunk;
            }
            loss_and_gradient(model, view, cal, &grad);
            auto& layers = model.layers();
            for (std::size_t li = 0; li < layers.size(); ++li) {
                for (std::size_t k = 0; k < layers[li].weights.size(); ++k) {
                    layers[li].weights[k] -= hyper.learning_rate * grad.layers[li].weights[k];
                }
                for (std::size_t k = 0; k < layers[li].bias.size(); ++k) {
                    layers[li].bias[k] -= hyper.learning_rate * grad.layers[li].bias[k];
                }
            }
        }
    }
    history.push_back(loss_and_gradient(model, samples, cal, nullptr));
    return history;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw Error(ErrorCode::InsufficientData, "percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

}  // namespace irm
