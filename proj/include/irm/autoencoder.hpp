#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace irm {

// Dense layer, weights row-major with shape [out][in].
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

struct Calibration {
    double err_p05 = 0.0;
    double err_p95 = 0.0;
    bool calibrated = false;

    bool operator==(const Calibration&) const = default;
};

// Fully connected autoencoder with an elementwise sigmoid after every layer.
class AutoencoderModel {
public:
    AutoencoderModel() = default;
    // Zero-initialised network with the given layer widths.
    explicit AutoencoderModel(std::vector<std::size_t> layer_sizes);

    // Xavier-uniform initialisation from a seeded generator.
    static AutoencoderModel initialise(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

    std::size_t input_size() const { return layer_sizes_.empty() ? 0 : layer_sizes_.front(); }
    const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    // Throws ShapeMismatch when the input width is wrong.
    std::vector<double> forward(std::span<const double> input) const;
    // Activations of every layer, the input included.
    std::vector<std::vector<double>> forward_all(std::span<const double> input) const;

    Calibration calibration;
    std::uint64_t trained_on = 0;
    std::uint64_t version = 0;
    int schema_version = 1;

    // Checkpoint as JSON; doubles are written in shortest round-trip form so a
    // save/load cycle is bit-exact.
    std::string to_json_text() const;
    static AutoencoderModel from_json_text(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static AutoencoderModel load(const std::filesystem::path& path);

    bool operator==(const AutoencoderModel&) const = default;

private:
    std::vector<std::size_t> layer_sizes_;
    std::vector<DenseLayer> layers_;
};

double sigmoid(double x);

// Mean squared error; throws ShapeMismatch on unequal lengths.
double reconstruction_error(std::span<const double> v, std::span<const double> reconstruction);

// clamp((err - p05) / (p95 - p05), 0, 1); throws UncalibratedModel.
double normalize_error(double err, const Calibration& cal);

// One training example. Without a target the loss is the plain reconstruction
// error; with a target the loss is the squared gap between the (unclamped)
// calibrated score of the example and the target score.
struct TrainingSample {
    std::vector<double> x;
    double weight = 1.0;
    std::optional<double> target_score;
};

struct Gradient {
    std::vector<DenseLayer> layers;
};

// Weighted mean loss over `samples`; fills `grad` (same shapes as the model)
// when non-null. `cal` is required only for targeted samples.
double loss_and_gradient(const AutoencoderModel& model, std::span<const TrainingSample> samples,
                         const Calibration& cal, Gradient* grad);

struct TrainHyper {
    std::size_t epochs = 200;
    double learning_rate = 0.05;
    std::size_t batch = 0;  // 0 = full batch
    std::uint64_t seed = 7;
};

// Gradient descent in place; returns the loss recorded at the start of every
// epoch followed by the final loss.
std::vector<double> train(AutoencoderModel& model, std::span<const TrainingSample> samples, const Calibration& cal,
                          const TrainHyper& hyper);

// Linear-interpolated percentile (q in [0,1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace irm
