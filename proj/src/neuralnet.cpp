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

#include "bflab/neuralnet.hpp"

#include "bflab/binary_io.hpp"
#include "bflab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace bflab
{
    namespace
    {
        std::size_t product(const std::vector<std::size_t> &shape)
        {
            return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
        }

        std::string shape_string(const std::vector<std::size_t> &shape)
        {
            std::string s = "[";
            for (std::size_t i = 0; i < shape.size(); ++i)
                s += (i ? "," : "") + std::to_string(shape[i]);
            return s + "]";
        }

        void expect_shape(const Tensor &t, const std::vector<std::size_t> &shape, const char *what)
        {
            if (t.shape != shape)
                throw ShapeMismatch(std::string(what) + ": expected shape " + shape_string(shape) + ", got " +
                                    shape_string(t.shape));
        }

        void fill_uniform(Tensor &t, double limit, std::mt19937_64 &rng)
        {
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto &x : t.data)
                x = dist(rng);
        }

        double glorot_limit(std::size_t fan_in, std::size_t fan_out)
        {
            return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        }

        double sigmoid(double x)
        {
            return 1.0 / (1.0 + std::exp(-x));
        }
    }

    // ---- Tensor ----

    Tensor::Tensor(std::vector<std::size_t> shape_, double fill) : shape(std::move(shape_)), data(product(shape), fill)
    {
    }

    Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_))
    {
        if (data.size() != product(shape))
            throw ShapeMismatch("Tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                                shape_string(shape));
        if (!all_finite())
            throw NonFiniteValue("Tensor: non-finite entry");
    }

    bool Tensor::all_finite() const
    {
        return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
    }

    // ---- NetParams ----

    NetParams NetParams::zeros(const NetDims &dims, const NetHyper &hyper)
    {
        if (dims.n_users == 0 || dims.n_rx == 0)
            throw std::invalid_argument("NetParams: empty dimensions");
        if (dims.input_dim() < kKernelSize)
            throw ShapeMismatch("NetParams: input dimension must be at least 3");
        const std::size_t c = kConvChannels, hid = kHiddenUnits, out = dims.out_dim();
        NetParams p;
        p.dims = dims;
        p.hyper = hyper;
        p.conv_w = Tensor({c, kKernelSize, kKernelSize});
        p.conv_b = Tensor({c});
        p.bn_gamma = Tensor({c});
        p.bn_beta = Tensor({c});
        p.bn_running_mean = Tensor({c});
        p.bn_running_var = Tensor({c}, 1.0);
        p.dense1_w = Tensor({dims.flat_dim(), hid});
        p.dense1_b = Tensor({hid});
        p.out_w = Tensor({hid, out});
        p.out_b = Tensor({out});
        p.index_w1 = Tensor({dims.n_users, hid});
        p.index_b1 = Tensor({hid});
        p.index_w2 = Tensor({hid, out});
        p.index_b2 = Tensor({out});
        p.out_scale = Tensor({out}, 1.0);
        p.out_shift = Tensor({out});
        return p;
    }

    NetParams NetParams::initialize(const NetDims &dims, std::uint64_t seed, const NetHyper &hyper)
    {
        NetParams p = zeros(dims, hyper);
        std::mt19937_64 rng(seed);
        const std::size_t field = kKernelSize * kKernelSize;
        fill_uniform(p.conv_w, glorot_limit(field, field * kConvChannels), rng);
        std::fill(p.bn_gamma.data.begin(), p.bn_gamma.data.end(), 1.0);
        fill_uniform(p.dense1_w, glorot_limit(dims.flat_dim(), kHiddenUnits), rng);
        fill_uniform(p.out_w, glorot_limit(kHiddenUnits, dims.out_dim()), rng);
        fill_uniform(p.index_w1, glorot_limit(dims.n_users, kHiddenUnits), rng);
        fill_uniform(p.index_w2, glorot_limit(kHiddenUnits, dims.out_dim()), rng);
        return p;
    }

    const std::vector<std::string> &NetParams::tensor_names()
    {
        static const std::vector<std::string> names = {
            "conv_w", "conv_b",   "bn_gamma", "bn_beta",  "bn_running_mean", "bn_running_var", "dense1_w",
            "dense1_b", "out_w", "out_b",     "index_w1", "index_b1",        "index_w2",       "index_b2",
            "out_scale", "out_shift"};
        return names;
    }

    TensorRole NetParams::role(std::size_t tensor_index)
    {
        if (tensor_index == 4 || tensor_index == 5 || tensor_index >= 14)
            return TensorRole::buffer;
        if (tensor_index >= 10)
            return TensorRole::index;
        return TensorRole::main;
    }

    std::vector<Tensor *> NetParams::tensors()
    {
        return {&conv_w,   &conv_b,   &bn_gamma, &bn_beta,  &bn_running_mean, &bn_running_var, &dense1_w,
                &dense1_b, &out_w,    &out_b,    &index_w1, &index_b1,        &index_w2,       &index_b2,
                &out_scale, &out_shift};
    }

    std::vector<const Tensor *> NetParams::tensors() const
    {
        auto t = const_cast<NetParams *>(this)->tensors();
        return {t.begin(), t.end()};
    }

    std::size_t NetParams::trainable_count() const
    {
        std::size_t n = 0;
        const auto t = tensors();
        for (std::size_t i = 0; i < t.size(); ++i)
            if (role(i) != TensorRole::buffer)
                n += t[i]->size();
        return n;
    }

    void NetParams::validate() const
    {
        const NetParams ref = zeros(dims, hyper);
        const auto mine = tensors();
        const auto want = ref.tensors();
        for (std::size_t i = 0; i < mine.size(); ++i)
        {
            expect_shape(*mine[i], want[i]->shape, tensor_names()[i].c_str());
            if (!mine[i]->all_finite())
                throw NonFiniteValue("NetParams: non-finite entry in " + tensor_names()[i]);
        }
        for (double v : bn_running_var.data)
            if (!(v > 0.0))
                throw std::invalid_argument("NetParams: running variance must be positive");
    }

    NetParams zeros_like(const NetParams &p)
    {
        NetParams g = NetParams::zeros(p.dims, p.hyper);
        std::fill(g.bn_running_var.data.begin(), g.bn_running_var.data.end(), 0.0);
        return g;
    }

    // ---- layers ----

    Tensor conv_forward(const Tensor &x, const Tensor &w, const Tensor &b)
    {
        if (x.shape.size() != 3 || x.dim(1) != x.dim(2))
            throw ShapeMismatch("conv_forward: input must be [batch, n, n]");
        const std::size_t batch = x.dim(0), n = x.dim(1);
        if (n < kKernelSize)
            throw ShapeMismatch("conv_forward: spatial size below kernel size");
        expect_shape(w, {kConvChannels, kKernelSize, kKernelSize}, "conv_forward kernels");
        expect_shape(b, {kConvChannels}, "conv_forward bias");

        Tensor y({batch, kConvChannels, n, n});
        for (std::size_t s = 0; s < batch; ++s)
        {
            const double *xs = &x.data[s * n * n];
            for (std::size_t c = 0; c < kConvChannels; ++c)
            {
                const double *wc = &w.data[c * 9];
                double *yc = &y.data[(s * kConvChannels + c) * n * n];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                    {
                        double acc = b.data[c];
                        for (std::size_t a = 0; a < 3; ++a)
                        {
                            if (i + a < 1 || i + a > n)
                                continue;
                            const std::size_t ii = i + a - 1;
                            for (std::size_t e = 0; e < 3; ++e)
                            {
                                if (j + e < 1 || j + e > n)
                                    continue;
                                acc += wc[a * 3 + e] * xs[ii * n + j + e - 1];
                            }
                        }
                        yc[i * n + j] = acc;
                    }
            }
        }
        return y;
    }

    void conv_backward(const Tensor &x, const Tensor &grad_out, Tensor &grad_w, Tensor &grad_b)
    {
        const std::size_t batch = x.dim(0), n = x.dim(1);
        expect_shape(grad_out, {batch, kConvChannels, n, n}, "conv_backward gradient");
        for (std::size_t s = 0; s < batch; ++s)
        {
            const double *xs = &x.data[s * n * n];
            for (std::size_t c = 0; c < kConvChannels; ++c)
            {
                const double *g = &grad_out.data[(s * kConvChannels + c) * n * n];
                double *gw = &grad_w.data[c * 9];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                    {
                        const double gij = g[i * n + j];
                        grad_b.data[c] += gij;
                        for (std::size_t a = 0; a < 3; ++a)
                        {
                            if (i + a < 1 || i + a > n)
                                continue;
                            const std::size_t ii = i + a - 1;
                            for (std::size_t e = 0; e < 3; ++e)
                            {
                                if (j + e < 1 || j + e > n)
                                    continue;
                                gw[a * 3 + e] += gij * xs[ii * n + j + e - 1];
                            }
                        }
                    }
            }
        }
    }

    Tensor bn_forward(const Tensor &x, const NetParams &p, BnMode mode, BnCache &cache)
    {
        if (x.shape.size() != 4 || x.dim(1) != kConvChannels)
            throw ShapeMismatch("bn_forward: input must be [batch, 4, n, n]");
        const std::size_t batch = x.dim(0), plane = x.dim(2) * x.dim(3);
        const double count = static_cast<double>(batch * plane);
        if (mode == BnMode::batch && batch * plane < 2)
            throw ShapeMismatch("bn_forward: batch statistics need at least two values per channel");

        cache.mode = mode;
        cache.mean.assign(kConvChannels, 0.0);
        cache.var.assign(kConvChannels, 0.0);
        cache.inv_std.assign(kConvChannels, 0.0);
        cache.x_hat = Tensor(x.shape);
        Tensor y(x.shape);

        for (std::size_t c = 0; c < kConvChannels; ++c)
        {
            double mean = p.bn_running_mean.data[c], var = p.bn_running_var.data[c];
            if (mode == BnMode::batch)
            {
                double sum = 0.0;
                for (std::size_t s = 0; s < batch; ++s)
                    for (std::size_t q = 0; q < plane; ++q)
                        sum += x.data[(s * kConvChannels + c) * plane + q];
                mean = sum / count;
                double sq = 0.0;
                for (std::size_t s = 0; s < batch; ++s)
                    for (std::size_t q = 0; q < plane; ++q)
                    {
                        const double dv = x.data[(s * kConvChannels + c) * plane + q] - mean;
                        sq += dv * dv;
                    }
                var = sq / count;
            }
            const double inv_std = 1.0 / std::sqrt(var + p.hyper.bn_eps);
            cache.mean[c] = mean;
            cache.var[c] = var;
            cache.inv_std[c] = inv_std;
            const double gamma = p.bn_gamma.data[c], beta = p.bn_beta.data[c];
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t q = 0; q < plane; ++q)
                {
                    const std::size_t at = (s * kConvChannels + c) * plane + q;
                    const double xh = (x.data[at] - mean) * inv_std;
                    cache.x_hat.data[at] = xh;
                    y.data[at] = gamma * xh + beta;
                }
        }
        return y;
    }

    Tensor bn_backward(const Tensor &grad_out, const NetParams &p, const BnCache &cache, Tensor &grad_gamma,
                       Tensor &grad_beta)
    {
        const Tensor &xh = cache.x_hat;
        expect_shape(grad_out, xh.shape, "bn_backward gradient");
        const std::size_t batch = xh.dim(0), plane = xh.dim(2) * xh.dim(3);
        const double count = static_cast<double>(batch * plane);
        Tensor gx(xh.shape);

        for (std::size_t c = 0; c < kConvChannels; ++c)
        {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t q = 0; q < plane; ++q)
                {
                    const std::size_t at = (s * kConvChannels + c) * plane + q;
                    sum_g += grad_out.data[at];
                    sum_gx += grad_out.data[at] * xh.data[at];
                }
            grad_gamma.data[c] += sum_gx;
            grad_beta.data[c] += sum_g;

            const double scale = p.bn_gamma.data[c] * cache.inv_std[c];
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t q = 0; q < plane; ++q)
                {
                    const std::size_t at = (s * kConvChannels + c) * plane + q;
                    if (cache.mode == BnMode::batch)
                        gx.data[at] = scale * (grad_out.data[at] - sum_g / count - xh.data[at] * sum_gx / count);
                    else
                        gx.data[at] = scale * grad_out.data[at];
                }
        }
        return gx;
    }

    double leaky_relu(double x, double slope)
    {
        return x > 0.0 ? x : slope * x;
    }

    Tensor leaky_relu(const Tensor &x, double slope)
    {
        Tensor y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i)
            y.data[i] = leaky_relu(x.data[i], slope);
        return y;
    }

    Tensor leaky_relu_backward(const Tensor &pre_activation, const Tensor &grad_out, double slope)
    {
        expect_shape(grad_out, pre_activation.shape, "leaky_relu_backward");
        Tensor g(grad_out.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
            g.data[i] = pre_activation.data[i] > 0.0 ? grad_out.data[i] : slope * grad_out.data[i];
        return g;
    }

    Tensor dense_forward(const Tensor &x, const Tensor &w, const Tensor &b)
    {
        if (x.shape.size() != 2 || w.shape.size() != 2 || x.dim(1) != w.dim(0))
            throw ShapeMismatch("dense_forward: input width does not match weight rows");
        const std::size_t batch = x.dim(0), in = w.dim(0), out = w.dim(1);
        expect_shape(b, {out}, "dense_forward bias");
        Tensor y({batch, out});
        for (std::size_t s = 0; s < batch; ++s)
        {
            double *ys = &y.data[s * out];
            std::copy(b.data.begin(), b.data.end(), ys);
            for (std::size_t i = 0; i < in; ++i)
            {
                const double xi = x.data[s * in + i];
                if (xi == 0.0)
                    continue;
                const double *wi = &w.data[i * out];
                for (std::size_t o = 0; o < out; ++o)
                    ys[o] += xi * wi[o];
            }
        }
        return y;
    }

    Tensor dense_backward(const Tensor &x, const Tensor &w, const Tensor &grad_out, Tensor &grad_w, Tensor &grad_b)
    {
        const std::size_t batch = x.dim(0), in = w.dim(0), out = w.dim(1);
        expect_shape(grad_out, {batch, out}, "dense_backward gradient");
        Tensor gx({batch, in});
        for (std::size_t s = 0; s < batch; ++s)
        {
            const double *gs = &grad_out.data[s * out];
            for (std::size_t o = 0; o < out; ++o)
                grad_b.data[o] += gs[o];
            for (std::size_t i = 0; i < in; ++i)
            {
                const double xi = x.data[s * in + i];
                const double *wi = &w.data[i * out];
                double *gwi = &grad_w.data[i * out];
                double acc = 0.0;
                for (std::size_t o = 0; o < out; ++o)
                {
                    gwi[o] += xi * gs[o];
                    acc += gs[o] * wi[o];
                }
                gx.data[s * in + i] = acc;
            }
        }
        return gx;
    }

    Tensor index_forward(const NetParams &p, std::span<const std::vector<int>> d, IndexCache &cache)
    {
        const std::size_t batch = d.size(), k = p.dims.n_users;
        cache.streams = Tensor({batch, k});
        for (std::size_t s = 0; s < batch; ++s)
        {
            if (d[s].size() != k)
                throw ShapeMismatch("index_forward: stream vector length differs from user count");
            for (std::size_t u = 0; u < k; ++u)
            {
                if (d[s][u] < 1 || d[s][u] > static_cast<int>(kMaxStreams))
                    throw ShapeMismatch("index_forward: stream counts must be 1 or 2");
                cache.streams.data[s * k + u] = static_cast<double>(d[s][u] - 1);
            }
        }
        cache.hidden_pre = dense_forward(cache.streams, p.index_w1, p.index_b1);
        cache.hidden = leaky_relu(cache.hidden_pre, p.hyper.leaky_slope);
        cache.mask = dense_forward(cache.hidden, p.index_w2, p.index_b2);
        for (auto &x : cache.mask.data)
            x = sigmoid(x);
        return cache.mask;
    }

    // ---- full network ----

    PackedOutput ForwardCache::sample_output(std::size_t b) const
    {
        const std::size_t width = output.dim(1);
        PackedOutput out;
        out.v.assign(output.data.begin() + static_cast<std::ptrdiff_t>(b * width),
                     output.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * width));
        return out;
    }

    ForwardCache cmbnn_forward(const NetParams &p, std::span<const PackedInput> inputs,
                               std::span<const std::vector<int>> d, NetMode mode)
    {
        const std::size_t batch = inputs.size(), n = p.dims.input_dim(), out = p.dims.out_dim();
        if (batch == 0 || d.size() != batch)
            throw ShapeMismatch("cmbnn_forward: need one stream vector per input and a non-empty batch");

        ForwardCache c;
        c.mode = mode;
        c.input = Tensor({batch, n, n});
        for (std::size_t s = 0; s < batch; ++s)
        {
            if (inputs[s].n != n || inputs[s].m.size() != n * n)
                throw ShapeMismatch("cmbnn_forward: input size differs from the network dimensions");
            std::copy(inputs[s].m.begin(), inputs[s].m.end(), c.input.data.begin() + static_cast<std::ptrdiff_t>(s * n * n));
        }

        const double slope = p.hyper.leaky_slope;
        c.conv_out = conv_forward(c.input, p.conv_w, p.conv_b);
        c.bn_out = bn_forward(c.conv_out, p, mode == NetMode::eval ? BnMode::running : BnMode::batch, c.bn);
        c.flat = leaky_relu(c.bn_out, slope);
        c.flat.shape = {batch, p.dims.flat_dim()};
        c.hidden_pre = dense_forward(c.flat, p.dense1_w, p.dense1_b);
        c.hidden = leaky_relu(c.hidden_pre, slope);
        c.head = dense_forward(c.hidden, p.out_w, p.out_b);
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t j = 0; j < out; ++j)
            {
                double &h = c.head.data[s * out + j];
                h = h * p.out_scale.data[j] + p.out_shift.data[j];
            }
        index_forward(p, d, c.index);

        c.hard_mask = Tensor({batch, out}, 1.0);
        if (mode != NetMode::train)
            for (std::size_t s = 0; s < batch; ++s)
            {
                const auto m = stream_mask(d[s], p.dims.n_rx);
                std::copy(m.begin(), m.end(), c.hard_mask.data.begin() + static_cast<std::ptrdiff_t>(s * out));
            }

        c.output = Tensor({batch, out});
        for (std::size_t i = 0; i < c.output.size(); ++i)
            c.output.data[i] = c.head.data[i] * c.index.mask.data[i] * c.hard_mask.data[i];
        return c;
    }

    NetParams cmbnn_backward(const NetParams &p, const ForwardCache &c, const Tensor &grad_output, bool train_index)
    {
        expect_shape(grad_output, c.output.shape, "cmbnn_backward gradient");
        NetParams g = zeros_like(p);
        const double slope = p.hyper.leaky_slope;

        Tensor g_head(grad_output.shape);
        for (std::size_t i = 0; i < g_head.size(); ++i)
            g_head.data[i] = grad_output.data[i] * c.index.mask.data[i] * c.hard_mask.data[i] *
                             p.out_scale.data[i % p.out_scale.size()];

        if (train_index)
        {
            Tensor g_logit(grad_output.shape);
            for (std::size_t i = 0; i < g_logit.size(); ++i)
            {
                const double m = c.index.mask.data[i];
                g_logit.data[i] = grad_output.data[i] * c.head.data[i] * c.hard_mask.data[i] * m * (1.0 - m);
            }
            const Tensor g_hidden = dense_backward(c.index.hidden, p.index_w2, g_logit, g.index_w2, g.index_b2);
            const Tensor g_pre = leaky_relu_backward(c.index.hidden_pre, g_hidden, slope);
            dense_backward(c.index.streams, p.index_w1, g_pre, g.index_w1, g.index_b1);
        }

        const Tensor g_hidden = dense_backward(c.hidden, p.out_w, g_head, g.out_w, g.out_b);
        const Tensor g_hidden_pre = leaky_relu_backward(c.hidden_pre, g_hidden, slope);
        Tensor g_flat = dense_backward(c.flat, p.dense1_w, g_hidden_pre, g.dense1_w, g.dense1_b);
        g_flat.shape = c.bn_out.shape;
        const Tensor g_bn = leaky_relu_backward(c.bn_out, g_flat, slope);
        const Tensor g_conv = bn_backward(g_bn, p, c.bn, g.bn_gamma, g.bn_beta);
        conv_backward(c.input, g_conv, g.conv_w, g.conv_b);
        return g;
    }

    void update_running_stats(NetParams &p, const ForwardCache &cache)
    {
        if (cache.bn.mode != BnMode::batch)
            return;
        const double mom = p.hyper.bn_momentum;
        for (std::size_t c = 0; c < kConvChannels; ++c)
        {
            p.bn_running_mean.data[c] = mom * p.bn_running_mean.data[c] + (1.0 - mom) * cache.bn.mean[c];
            p.bn_running_var.data[c] = mom * p.bn_running_var.data[c] + (1.0 - mom) * cache.bn.var[c];
        }
    }

    PackedInput network_input(const ChannelSample &s)
    {
        return pack_gram(weighted_gram(s));
    }

    PackedOutput cmbnn_predict(const NetParams &p, const ChannelSample &s)
    {
        const PackedInput in = network_input(s);
        const std::vector<int> d = s.d;
        const auto cache = cmbnn_forward(p, std::span(&in, 1), std::span(&d, 1), NetMode::eval);
        return cache.sample_output(0);
    }

    BeamformerSet cmbnn_beamformers(const NetParams &p, const ChannelSample &s)
    {
        const PackedOutput out = cmbnn_predict(p, s);
        const auto [u, w] = unpack_uw(out, s.d, s.n_rx());
        return reconstruct_v(s, gram(s.h), u, w);
    }

    // ---- losses ----

    HuberResult huber_loss(std::span<const double> pred, std::span<const double> target, double delta)
    {
        if (pred.size() != target.size())
            throw ShapeMismatch("huber_loss: prediction and target lengths differ");
        HuberResult r;
        r.grad.resize(pred.size());
        if (pred.empty())
            return r;
        const double inv_n = 1.0 / static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i)
        {
            const double e = pred[i] - target[i];
            if (std::abs(e) <= delta)
            {
                r.loss += 0.5 * e * e;
                r.grad[i] = e * inv_n;
            }
            else
            {
                r.loss += delta * (std::abs(e) - 0.5 * delta);
                r.grad[i] = (e > 0.0 ? delta : -delta) * inv_n;
            }
        }
        r.loss *= inv_n;
        return r;
    }

    HuberResult huber_loss(const PackedOutput &pred, const PackedOutput &target, double delta)
    {
        return huber_loss(std::span<const double>(pred.v), std::span<const double>(target.v), delta);
    }

    namespace
    {
        void batch_inputs(std::span<const ChannelSample> samples, std::vector<PackedInput> &inputs,
                          std::vector<std::vector<int>> &d)
        {
            inputs.clear();
            d.clear();
            for (const auto &s : samples)
            {
                inputs.push_back(network_input(s));
                d.push_back(s.d);
            }
        }
    }

    BatchLoss supervised_loss(const NetParams &p, std::span<const ChannelSample> samples,
                              std::span<const PackedOutput> labels, double delta)
    {
        if (labels.size() != samples.size())
            throw ShapeMismatch("supervised_loss: one label per sample required");
        std::vector<PackedInput> inputs;
        std::vector<std::vector<int>> d;
        batch_inputs(samples, inputs, d);

        BatchLoss r;
        r.cache = cmbnn_forward(p, inputs, d, NetMode::train);
        const std::size_t width = p.dims.out_dim();
        std::vector<double> target;
        target.reserve(samples.size() * width);
        for (const auto &l : labels)
        {
            if (l.v.size() != width)
                throw ShapeMismatch("supervised_loss: label length differs from the network output");
            target.insert(target.end(), l.v.begin(), l.v.end());
        }
        HuberResult h = huber_loss(std::span<const double>(r.cache.output.data), target, delta);
        r.loss = h.loss;
        r.used = samples.size();
        r.grads = cmbnn_backward(p, r.cache, Tensor(r.cache.output.shape, std::move(h.grad)), true);
        return r;
    }

    BatchLoss unsupervised_loss(const NetParams &p, std::span<const ChannelSample> samples)
    {
        std::vector<PackedInput> inputs;
        std::vector<std::vector<int>> d;
        batch_inputs(samples, inputs, d);

        BatchLoss r;
        r.cache = cmbnn_forward(p, inputs, d, NetMode::refine);
        const std::size_t batch = samples.size(), width = p.dims.out_dim();

        std::vector<RateLossResult> per(batch);
        std::vector<char> ok(batch, 0);
        parallel_for(batch, [&](std::size_t b) {
            try
            {
                per[b] = rate_loss(samples[b], r.cache.sample_output(b));
                ok[b] = 1;
            }
            catch (const NumericalError &)
            {
                ok[b] = 0;
            }
        });

        // Order-fixed reduction over the batch
        Tensor grad({batch, width});
        for (std::size_t b = 0; b < batch; ++b)
        {
            if (!ok[b])
            {
                r.skipped.push_back(b);
                continue;
            }
            ++r.used;
            r.loss += per[b].loss;
        }
        if (r.used == 0)
        {
            r.grads = zeros_like(p);
            return r;
        }
        const double inv = 1.0 / static_cast<double>(r.used);
        r.loss *= inv;
        for (std::size_t b = 0; b < batch; ++b)
            if (ok[b])
                for (std::size_t i = 0; i < width; ++i)
                    grad.data[b * width + i] = per[b].grad[i] * inv;
        r.grads = cmbnn_backward(p, r.cache, grad, false);
        return r;
    }

    // ---- optimizer ----

    AdamState AdamState::create(const NetParams &p, double lr)
    {
        AdamState s;
        s.first_moment = zeros_like(p);
        s.second_moment = zeros_like(p);
        s.lr = lr;
        s.validate();
        return s;
    }

    void AdamState::validate() const
    {
        if (!(lr > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
            throw std::invalid_argument("AdamState: invalid hyperparameters");
    }

    void adam_step(NetParams &p, const NetParams &grads, AdamState &state, bool update_index)
    {
        auto params = p.tensors();
        const auto g = grads.tensors();
        auto m = state.first_moment.tensors();
        auto v = state.second_moment.tensors();
        for (std::size_t t = 0; t < params.size(); ++t)
            if (!params[t]->same_shape(*g[t]) || !params[t]->same_shape(*m[t]))
                throw ShapeMismatch("adam_step: shape mismatch in " + NetParams::tensor_names()[t]);

        ++state.step_count;
        const double t_step = static_cast<double>(state.step_count);
        const double corr1 = 1.0 - std::pow(state.beta1, t_step);
        const double corr2 = 1.0 - std::pow(state.beta2, t_step);
        for (std::size_t t = 0; t < params.size(); ++t)
        {
            const TensorRole role = NetParams::role(t);
            if (role == TensorRole::buffer || (role == TensorRole::index && !update_index))
                continue;
            for (std::size_t i = 0; i < params[t]->size(); ++i)
            {
                const double gi = g[t]->data[i];
                double &mi = m[t]->data[i];
                double &vi = v[t]->data[i];
                mi = state.beta1 * mi + (1.0 - state.beta1) * gi;
                vi = state.beta2 * vi + (1.0 - state.beta2) * gi * gi;
                params[t]->data[i] -= state.lr * (mi / corr1) / (std::sqrt(vi / corr2) + state.epsilon);
            }
        }
    }

    // ---- gradient checking ----

    GradCheckReport grad_check(const NetParams &p, std::span<const ChannelSample> samples,
                               std::span<const PackedOutput> labels, LossKind kind, const GradCheckOptions &opts)
    {
        const auto loss_of = [&](const NetParams &q) {
            return kind == LossKind::huber ? supervised_loss(q, samples, labels) : unsupervised_loss(q, samples);
        };
        const BatchLoss base = loss_of(p);
        const auto analytic = base.grads.tensors();
        const double floor = opts.floor_scale * std::max(1.0, std::abs(base.loss));

        std::vector<std::size_t> candidates;
        for (std::size_t t = 0; t < analytic.size(); ++t)
        {
            const TensorRole role = NetParams::role(t);
            if (role == TensorRole::main || (role == TensorRole::index && kind == LossKind::huber))
                candidates.push_back(t);
        }

        std::mt19937_64 rng(opts.seed);
        GradCheckReport report;
        const std::size_t flipped = 6; // dense1_w
        for (std::size_t e = 0; e < opts.parameter_count; ++e)
        {
            const std::size_t t = candidates[e % candidates.size()];
            std::uniform_int_distribution<std::size_t> pick(0, analytic[t]->size() - 1);
            const std::size_t i = pick(rng);

            NetParams plus = p, minus = p;
            plus.tensors()[t]->data[i] += opts.step;
            minus.tensors()[t]->data[i] -= opts.step;
            const BatchLoss lp = loss_of(plus), lm = loss_of(minus);
            const double numeric = (lp.loss - lm.loss) / (2.0 * opts.step);
            double a = analytic[t]->data[i];
            if (opts.inject_sign_flip && t == flipped)
                a = -a;

            GradCheckEntry entry{NetParams::tensor_names()[t], i, a, numeric, 0.0};
            if (lp.skipped != base.skipped || lm.skipped != base.skipped)
                entry.rel_error = std::numeric_limits<double>::infinity();
            else
                entry.rel_error = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
            report.entries.push_back(entry);
        }
        return report;
    }

    NetParams random_params(const NetDims &dims, std::uint64_t seed)
    {
        NetParams p = NetParams::initialize(dims, seed);
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        for (Tensor *t : {&p.conv_b, &p.bn_beta, &p.dense1_b, &p.out_b, &p.index_b1, &p.index_b2})
            fill_uniform(*t, 0.1, rng);
        return p;
    }

    GradCheckInstance make_gradcheck_instance(const ChannelConfig &cfg, std::uint64_t seed, LossKind kind,
                                              std::size_t batch)
    {
        cfg.validate();
        if (batch == 0)
            throw std::invalid_argument("make_gradcheck_instance: empty batch");
        const NetDims dims{cfg.n_users, cfg.n_rx};
        const std::size_t max_candidates = 4000;

        GradCheckInstance inst;
        for (std::uint64_t attempt = 0;; ++attempt)
        {
            if (attempt == 64)
                throw NumericalError("make_gradcheck_instance: no batch with a defined loss found");
            inst.params_seed = seed + attempt * 1000003ULL;
            inst.params = random_params(dims, inst.params_seed);
            inst.samples.clear();
            const std::uint64_t base = (seed + attempt * 7919ULL) * 1000000ULL;
            for (std::size_t j = 0; j < max_candidates && inst.samples.size() < batch; ++j)
            {
                ++inst.candidates_tried;
                inst.samples.push_back(normalize_sample(sample_channel(cfg, base + j)));
                if (kind == LossKind::unsupervised && !unsupervised_loss(inst.params, inst.samples).skipped.empty())
                    inst.samples.pop_back();
            }
            if (inst.samples.size() == batch)
                break;
        }

        inst.labels.clear();
        for (const auto &s : inst.samples)
        {
            const auto sol = rwmmse_solve(s);
            inst.labels.push_back(pack_uw(sol.state.u, sol.state.w, s.d));
        }
        return inst;
    }

    // ---- model file ----

    namespace
    {
        constexpr char kModelMagic[8] = {'B', 'F', 'N', 'N', '0', '0', '0', '1'};
    }

    void save_model(const NetParams &p, const std::filesystem::path &path)
    {
        p.validate();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("save_model: cannot open " + path.string());

        nlohmann::json tensors = nlohmann::json::array();
        const auto t = p.tensors();
        for (std::size_t i = 0; i < t.size(); ++i)
            tensors.push_back({{"name", NetParams::tensor_names()[i]}, {"shape", t[i]->shape}});
        const nlohmann::json manifest = {
            {"format", "bflab-model/1"},
            {"dims",
             {{"n_users", p.dims.n_users},
              {"n_rx", p.dims.n_rx},
              {"max_streams", kMaxStreams},
              {"input_dim", p.dims.input_dim()},
              {"out_dim", p.dims.out_dim()},
              {"conv_channels", kConvChannels},
              {"kernel_size", kKernelSize},
              {"hidden_units", kHiddenUnits}}},
            {"hyper",
             {{"leaky_slope", p.hyper.leaky_slope},
              {"bn_eps", p.hyper.bn_eps},
              {"bn_momentum", p.hyper.bn_momentum}}},
            {"includes_bn_running_stats", true},
            {"refine_bn_statistics", "batch"},
            {"tensors", tensors}};

        io::write_magic(out, kModelMagic);
        io::write_json_blob(out, manifest);
        for (const Tensor *x : t)
            for (double v : x->data)
                io::write_f64(out, v);
        if (!out)
            throw IoError("save_model: write failed for " + path.string());
    }

    NetParams load_model(const std::filesystem::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw IoError("load_model: cannot open " + path.string());
        io::expect_magic(in, kModelMagic, "model");
        const auto manifest = io::read_json_blob(in);

        NetParams p;
        try
        {
            if (manifest.at("format") != "bflab-model/1")
                throw FormatError("load_model: unsupported format " + manifest.at("format").dump());
            NetDims dims;
            dims.n_users = manifest.at("dims").at("n_users").get<std::size_t>();
            dims.n_rx = manifest.at("dims").at("n_rx").get<std::size_t>();
            NetHyper hyper;
            hyper.leaky_slope = manifest.at("hyper").at("leaky_slope").get<double>();
            hyper.bn_eps = manifest.at("hyper").at("bn_eps").get<double>();
            hyper.bn_momentum = manifest.at("hyper").at("bn_momentum").get<double>();
            p = NetParams::zeros(dims, hyper);

            const auto &entries = manifest.at("tensors");
            const auto t = p.tensors();
            if (entries.size() != t.size())
                throw FormatError("load_model: unexpected tensor count");
            for (std::size_t i = 0; i < t.size(); ++i)
            {
                if (entries[i].at("name") != NetParams::tensor_names()[i] ||
                    entries[i].at("shape").get<std::vector<std::size_t>>() != t[i]->shape)
                    throw FormatError("load_model: tensor " + std::to_string(i) + " does not match the architecture");
            }
        }
        catch (const nlohmann::json::exception &e)
        {
            throw FormatError(std::string("load_model: malformed manifest: ") + e.what());
        }
        catch (const std::invalid_argument &e)
        {
            throw FormatError(std::string("load_model: bad dimensions: ") + e.what());
        }

        for (Tensor *x : p.tensors())
            for (double &v : x->data)
                v = io::read_f64(in);
        try
        {
            p.validate();
        }
        catch (const std::invalid_argument &e)
        {
            throw FormatError(std::string("load_model: ") + e.what());
        }
        return p;
    }
}
