// SPDX-License-Identifier: Apache-2.0
//
// bflab - beamforming laboratory for weighted sum-rate precoding and learned beamformers
// Copyright (C) 2026 The bflab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef BFLAB_NEURALNET_HPP
#define BFLAB_NEURALNET_HPP

// Compact beamforming network: Gram input -> conv(4 kernels, 3x3) -> batch norm -> leaky ReLU -> dense(32)
// -> leaky ReLU -> linear head producing packed (U, W), gated by a soft mask from a small index network.
// Every layer has a hand-written backward pass, including the complex chain from (U, W) to the sum-rate.

#include "bflab/channel.hpp"
#include "bflab/codec.hpp"
#include "bflab/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bflab
{
    inline constexpr std::size_t kConvChannels = 4;
    inline constexpr std::size_t kKernelSize = 3;
    inline constexpr std::size_t kHiddenUnits = 32;

    class Tensor
    {
    public:
        std::vector<std::size_t> shape;
        std::vector<double> data;

        Tensor() = default;
        explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
        Tensor(std::vector<std::size_t> shape, std::vector<double> data); // throws ShapeMismatch, NonFiniteValue

        std::size_t size() const { return data.size(); }
        std::size_t dim(std::size_t axis) const { return shape.at(axis); }
        bool same_shape(const Tensor &other) const { return shape == other.shape; }
        bool all_finite() const;
    };

    struct NetDims
    {
        std::size_t n_users = 2;
        std::size_t n_rx = 2;

        std::size_t input_dim() const { return n_users * n_rx; }
        std::size_t flat_dim() const { return kConvChannels * input_dim() * input_dim(); }
        std::size_t out_dim() const { return packed_output_length(n_users, n_rx); }
        bool operator==(const NetDims &) const = default;
    };

    struct NetHyper
    {
        double leaky_slope = 0.01;
        double bn_eps = 1e-5;
        double bn_momentum = 0.99; // running = momentum * running + (1 - momentum) * batch
    };

    enum class TensorRole
    {
        main,   // trained in both phases
        index,  // index network, frozen during unsupervised refinement
        buffer, // batch-norm running statistics, never touched by gradients
    };

    struct NetParams
    {
        NetDims dims;
        NetHyper hyper;

        Tensor conv_w;   // [4, 3, 3]
        Tensor conv_b;   // [4]
        Tensor bn_gamma; // [4]
        Tensor bn_beta;  // [4]
        Tensor bn_running_mean;
        Tensor bn_running_var;
        Tensor dense1_w; // [flat_dim, 32]
        Tensor dense1_b; // [32]
        Tensor out_w;    // [32, out_dim]
        Tensor out_b;    // [out_dim]
        Tensor index_w1; // [n_users, 32]
        Tensor index_b1; // [32]
        Tensor index_w2; // [32, out_dim]
        Tensor index_b2; // [out_dim]
        // Fixed affine map applied to the head, head = (hidden * out_w + out_b) * out_scale + out_shift.
        // Identity by default; training sets it from the label statistics.
        Tensor out_scale; // [out_dim]
        Tensor out_shift; // [out_dim]

        // All tensors zero except the running variance and out_scale (ones)
        static NetParams zeros(const NetDims &dims, const NetHyper &hyper = {});

        // Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, gamma = 1, beta = 0
        static NetParams initialize(const NetDims &dims, std::uint64_t seed, const NetHyper &hyper = {});

        // Fixed order shared by the optimizer, gradient checker and model file
        static const std::vector<std::string> &tensor_names();
        static TensorRole role(std::size_t tensor_index);
        std::vector<Tensor *> tensors();
        std::vector<const Tensor *> tensors() const;

        std::size_t trainable_count() const;

        // Throws ShapeMismatch or std::invalid_argument (non-positive running variance)
        void validate() const;
    };

    // Gradient container with the same layout; buffers stay zero
    NetParams zeros_like(const NetParams &p);

    // ---- layers ----

    // x: [B, n, n]; w: [4, 3, 3]; b: [4] -> [B, 4, n, n]. Same-size zero-padded cross-correlation, stride 1.
    Tensor conv_forward(const Tensor &x, const Tensor &w, const Tensor &b);
    // Accumulates kernel and bias gradients; the input gradient is never needed
    void conv_backward(const Tensor &x, const Tensor &grad_out, Tensor &grad_w, Tensor &grad_b);

    enum class BnMode
    {
        batch,   // statistics of the current batch over batch and spatial positions
        running, // frozen running statistics
    };

    struct BnCache
    {
        Tensor x_hat;                 // normalized input, [B, C, n, n]
        std::vector<double> mean;     // per channel, of the statistics actually used
        std::vector<double> var;
        std::vector<double> inv_std;
        BnMode mode = BnMode::batch;
    };

    Tensor bn_forward(const Tensor &x, const NetParams &p, BnMode mode, BnCache &cache);
    Tensor bn_backward(const Tensor &grad_out, const NetParams &p, const BnCache &cache, Tensor &grad_gamma,
                       Tensor &grad_beta);

    double leaky_relu(double x, double slope);
    Tensor leaky_relu(const Tensor &x, double slope);
    Tensor leaky_relu_backward(const Tensor &pre_activation, const Tensor &grad_out, double slope);

    // x: [B, in]; w: [in, out]; b: [out] -> [B, out]
    Tensor dense_forward(const Tensor &x, const Tensor &w, const Tensor &b);
    // Accumulates weight and bias gradients, returns the input gradient
    Tensor dense_backward(const Tensor &x, const Tensor &w, const Tensor &grad_out, Tensor &grad_w, Tensor &grad_b);

    struct IndexCache
    {
        Tensor streams; // [B, n_users], entries d_k - 1
        Tensor hidden_pre;
        Tensor hidden;
        Tensor mask; // sigmoid output, [B, out_dim]
    };

    // dense(K -> 32) -> leaky ReLU -> dense(32 -> out_dim) -> sigmoid, one row per batch entry
    Tensor index_forward(const NetParams &p, std::span<const std::vector<int>> d, IndexCache &cache);

    // ---- full network ----

    enum class NetMode
    {
        train,  // batch statistics, soft mask only
        refine, // batch statistics, soft and hard mask (unsupervised refinement)
        eval,   // running statistics, soft and hard mask
    };

    struct ForwardCache
    {
        NetMode mode = NetMode::train;
        Tensor input;      // [B, n, n]
        Tensor conv_out;   // [B, 4, n, n]
        BnCache bn;
        Tensor bn_out;     // pre-activation of the first leaky ReLU
        Tensor flat;       // [B, flat_dim], channel-major flatten of the activation
        Tensor hidden_pre; // [B, 32]
        Tensor hidden;
        Tensor head;       // linear head before masking, [B, out_dim]
        IndexCache index;
        Tensor hard_mask;  // [B, out_dim], all ones in train mode
        Tensor output;     // [B, out_dim]

        std::size_t batch() const { return output.dim(0); }
        PackedOutput sample_output(std::size_t b) const;
    };

    // Throws ShapeMismatch for inconsistent inputs or stream vectors
    ForwardCache cmbnn_forward(const NetParams &p, std::span<const PackedInput> inputs,
                               std::span<const std::vector<int>> d, NetMode mode);

    // grad_output: [B, out_dim]. Index-network gradients are produced only if train_index is set.
    NetParams cmbnn_backward(const NetParams &p, const ForwardCache &cache, const Tensor &grad_output,
                             bool train_index);

    // Moves the running statistics toward the batch statistics stored in a batch-mode cache
    void update_running_stats(NetParams &p, const ForwardCache &cache);

    // Network input of a normalized sample: the packed priority-weighted Gram
    PackedInput network_input(const ChannelSample &s);

    // Eval-mode prediction for a single normalized sample
    PackedOutput cmbnn_predict(const NetParams &p, const ChannelSample &s);

    // Prediction followed by unpacking and precoder reconstruction
    BeamformerSet cmbnn_beamformers(const NetParams &p, const ChannelSample &s);

    // ---- losses ----

    struct HuberResult
    {
        double loss = 0.0;
        std::vector<double> grad; // d loss / d pred
    };

    // Mean of the Huber function over all elements
    HuberResult huber_loss(std::span<const double> pred, std::span<const double> target, double delta = 1.0);
    HuberResult huber_loss(const PackedOutput &pred, const PackedOutput &target, double delta = 1.0);

    struct RateLossResult
    {
        double loss = 0.0;        // -weighted sum-rate of the reconstructed precoders
        std::vector<double> grad; // d loss / d packed output
    };

    // Loss of one packed output through unpacking, precoder reconstruction and the rate formula.
    // Throws AllZeroOutput or NotPositiveDefinite when the reconstruction is undefined.
    RateLossResult rate_loss(const ChannelSample &s, const PackedOutput &out);

    struct BatchLoss
    {
        double loss = 0.0; // mean over the samples that contributed
        NetParams grads;
        std::size_t used = 0;
        std::vector<std::size_t> skipped; // positions within the batch
        ForwardCache cache;
    };

    // Mean Huber loss over every element of the batch, train mode, index network included
    BatchLoss supervised_loss(const NetParams &p, std::span<const ChannelSample> samples,
                              std::span<const PackedOutput> labels, double delta = 1.0);

    // Mean of -weighted sum-rate over the batch, refine mode, index network frozen.
    // Samples whose reconstruction fails are skipped and listed.
    BatchLoss unsupervised_loss(const NetParams &p, std::span<const ChannelSample> samples);

    // ---- optimizer ----

    struct AdamState
    {
        NetParams first_moment;
        NetParams second_moment;
        std::uint64_t step_count = 0;
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;

        static AdamState create(const NetParams &p, double lr = 1e-3);
        void validate() const;
    };

    // Bias-corrected Adam step over main tensors, and index tensors if update_index is set
    void adam_step(NetParams &p, const NetParams &grads, AdamState &state, bool update_index = true);

    // ---- gradient checking ----

    enum class LossKind
    {
        huber,
        unsupervised,
    };

    struct GradCheckOptions
    {
        std::size_t parameter_count = 60; // at least 50 sampled entries
        double step = 1e-6;
        // The relative-error denominator is at least floor_scale * max(1, |loss|). Central differences
        // carry roundoff of about 1e-16 * |loss| / step, so smaller gradient entries are compared on
        // that absolute scale instead.
        double floor_scale = 1e-3;
        std::uint64_t seed = 0;
        bool inject_sign_flip = false; // negates one analytic tensor gradient, to test the checker itself
    };

    struct GradCheckEntry
    {
        std::string tensor;
        std::size_t index = 0;
        double analytic = 0.0;
        double numeric = 0.0;
        double rel_error = 0.0;
    };

    struct GradCheckReport
    {
        std::vector<GradCheckEntry> entries;
        double max_rel_error = 0.0;
        bool passed(double tolerance) const { return !entries.empty() && max_rel_error < tolerance; }
    };

    // Central differences against the analytic gradient of one loss on a fixed batch.
    // An entry whose perturbation changes the set of skipped samples is reported with infinite error.
    GradCheckReport grad_check(const NetParams &p, std::span<const ChannelSample> samples,
                               std::span<const PackedOutput> labels, LossKind kind,
                               const GradCheckOptions &opts = {});

    struct GradCheckInstance
    {
        NetParams params;
        std::vector<ChannelSample> samples; // normalized
        std::vector<PackedOutput> labels;   // converged R-WMMSE (U, W)
        std::uint64_t params_seed = 0;
        std::size_t candidates_tried = 0;
    };

    // Fresh random parameters for a configuration: initialize() weights plus small uniform biases, so
    // no unit starts exactly on the leaky-ReLU kink (zero biases do so for all-single-stream inputs).
    NetParams random_params(const NetDims &dims, std::uint64_t seed);

    // A random batch on which the chosen loss is defined. Random outputs usually give an indefinite
    // reconstruction system, so for the unsupervised loss samples are added greedily and kept only if
    // every sample of the grown batch still reconstructs.
    GradCheckInstance make_gradcheck_instance(const ChannelConfig &cfg, std::uint64_t seed, LossKind kind,
                                              std::size_t batch = 4);

    // ---- model file ----

    // Magic "BFNN0001", JSON manifest, then float64 blobs in manifest order. Throws IoError, FormatError.
    void save_model(const NetParams &p, const std::filesystem::path &path);
    NetParams load_model(const std::filesystem::path &path);
}

#endif
