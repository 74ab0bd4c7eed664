#include "conceal/nn.hpp"

#include <algorithm>
#include <cmath>

#include "conceal/error.hpp"
#include "conceal/random.hpp"

namespace conceal::nn {

std::string_view to_string(Architecture kind) {
    switch (kind) {
        case Architecture::dense_autoencoder: return "autoencoder";
        case Architecture::lstm_predictor: return "lstm";
        case Architecture::cnn_predictor: return "cnn";
    }
    return "unknown";
}

std::string_view to_string(Activation act) {
    switch (act) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::linear: return "linear";
        case Activation::tanh: return "tanh";
    }
    return "unknown";
}

Architecture parse_architecture(std::string_view name) {
    if (name == "autoencoder" || name == "dense-autoencoder" || name == "ae") return Architecture::dense_autoencoder;
    if (name == "lstm" || name == "lstm-predictor") return Architecture::lstm_predictor;
    if (name == "cnn" || name == "cnn-predictor") return Architecture::cnn_predictor;
    fail(ErrorKind::invalid_spec, "unknown architecture '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "linear") return Activation::linear;
    if (name == "tanh") return Activation::tanh;
    fail(ErrorKind::invalid_spec, "unknown activation '" + std::string(name) + "'");
}

namespace {

std::size_t expected_activation_count(const NetworkSpec& s) {
    switch (s.kind) {
        case Architecture::dense_autoencoder: return s.widths.size() + 1;
        case Architecture::lstm_predictor: return 1;
        case Architecture::cnn_predictor: return s.widths.size() + 1;
    }
    return 0;
}

}  // namespace

void NetworkSpec::validate() const {
    require(channels >= 1, ErrorKind::invalid_spec, "network needs at least one channel");
    require(steps >= 1, ErrorKind::invalid_spec, "network needs at least one input step");
    for (auto w : widths) require(w >= 1, ErrorKind::invalid_spec, "layer widths must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::invalid_spec,
            "dropout rate must lie in [0, 1)");
    if (kind == Architecture::lstm_predictor)
        require(widths.size() == 1, ErrorKind::invalid_spec, "lstm takes exactly one hidden width");
    if (kind == Architecture::cnn_predictor)
        require(!widths.empty(), ErrorKind::invalid_spec, "cnn needs at least one conv layer");
    if (kind != Architecture::cnn_predictor)
        require(dropout == 0.0, ErrorKind::invalid_spec, "dropout is only supported by the cnn");
    require(activations.size() == expected_activation_count(*this), ErrorKind::invalid_spec,
            "activation count does not match layer count");
}

NetworkSpec autoencoder_spec(std::size_t channels, std::vector<std::size_t> hidden,
                             Activation hidden_act, Activation output_act, std::uint64_t seed) {
    NetworkSpec s;
    s.kind = Architecture::dense_autoencoder;
    s.activations.assign(hidden.size(), hidden_act);
    s.activations.push_back(output_act);
    s.widths = std::move(hidden);
    s.steps = 1;
    s.channels = channels;
    s.seed = seed;
    return s;
}

NetworkSpec lstm_spec(std::size_t channels, std::size_t steps, std::uint64_t seed) {
    NetworkSpec s;
    s.kind = Architecture::lstm_predictor;
    s.widths = {channels};
    s.steps = steps;
    s.channels = channels;
    s.activations = {Activation::linear};
    s.seed = seed;
    return s;
}

NetworkSpec cnn_spec(std::size_t channels, std::size_t steps, std::uint64_t seed,
                     std::vector<std::size_t> filters, double dropout) {
    NetworkSpec s;
    s.kind = Architecture::cnn_predictor;
    s.activations.assign(filters.size(), Activation::tanh);
    s.activations.push_back(Activation::linear);
    s.widths = std::move(filters);
    s.steps = steps;
    s.channels = channels;
    s.dropout = dropout;
    s.seed = seed;
    return s;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
    if (blocks.size() != other.blocks.size()) return false;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].rows != other.blocks[i].rows || blocks[i].cols != other.blocks[i].cols)
            return false;
    return true;
}

void ModelParams::fill(double value) {
    for (auto& b : blocks) std::fill(b.data.begin(), b.data.end(), value);
}

bool ModelParams::all_finite() const {
    for (const auto& b : blocks)
        for (double v : b.data)
            if (!std::isfinite(v)) return false;
    return true;
}

Tensor glorot_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                   std::uint64_t seed) {
    require(fan_in >= 1 && fan_out >= 1, ErrorKind::invalid_spec,
            "glorot init needs non-zero fan dimensions");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(rows, cols);
    Rng rng(seed);
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    return glorot_init(fan_out, fan_in, fan_in, fan_out, seed);
}

namespace {

// Conv input widths per layer for the CNN, plus the flattened dense width.
struct CnnShape {
    std::vector<std::size_t> length_in;  // per conv layer
    std::vector<std::size_t> ch_in;
    std::vector<std::size_t> length_out;  // after pooling
    std::size_t flat = 0;
};

CnnShape cnn_shape(const NetworkSpec& s) {
    CnnShape shape;
    std::size_t len = s.steps;
    std::size_t ch = s.channels;
    for (auto filters : s.widths) {
        shape.length_in.push_back(len);
        shape.ch_in.push_back(ch);
        len = len >= 2 ? len / 2 : len;
        shape.length_out.push_back(len);
        ch = filters;
    }
    shape.flat = len * ch;
    return shape;
}

}  // namespace

ModelParams zero_params(const NetworkSpec& spec) {
    spec.validate();
    ModelParams p;
    const std::size_t n = spec.channels;
    switch (spec.kind) {
        case Architecture::dense_autoencoder: {
            std::size_t in = spec.input_size();
            for (std::size_t l = 0; l <= spec.widths.size(); ++l) {
                const std::size_t out = l < spec.widths.size() ? spec.widths[l] : n;
                p.blocks.emplace_back(out, in);
                p.blocks.emplace_back(1, out);
                in = out;
            }
            break;
        }
        case Architecture::lstm_predictor: {
            const std::size_t h = spec.widths[0];
            p.blocks.emplace_back(4 * h, n);
            p.blocks.emplace_back(4 * h, h);
            p.blocks.emplace_back(1, 4 * h);
            p.blocks.emplace_back(n, h);
            p.blocks.emplace_back(1, n);
            break;
        }
        case Architecture::cnn_predictor: {
            const auto shape = cnn_shape(spec);
            for (std::size_t l = 0; l < spec.widths.size(); ++l) {
                p.blocks.emplace_back(spec.widths[l], shape.ch_in[l] * kCnnKernel);
                p.blocks.emplace_back(1, spec.widths[l]);
            }
            p.blocks.emplace_back(n, shape.flat);
            p.blocks.emplace_back(1, n);
            break;
        }
    }
    return p;
}

ModelParams init_params(const NetworkSpec& spec) {
    ModelParams p = zero_params(spec);
    auto block_seed = [&](std::size_t i) { return splitmix64(spec.seed ^ (0x51ed2701ULL * (i + 1))); };
    switch (spec.kind) {
        case Architecture::dense_autoencoder:
            for (std::size_t i = 0; i < p.blocks.size(); i += 2) {
                auto& w = p.blocks[i];
                w = glorot_init(w.rows, w.cols, w.cols, w.rows, block_seed(i));
            }
            break;
        case Architecture::lstm_predictor: {
            const std::size_t h = spec.widths[0];
            for (std::size_t i : {0u, 1u, 3u}) {
                auto& w = p.blocks[i];
                w = glorot_init(w.rows, w.cols, w.cols, w.rows, block_seed(i));
            }
            for (std::size_t k = 0; k < h; ++k) p.blocks[2].data[h + k] = 1.0;  // forget gate
            break;
        }
        case Architecture::cnn_predictor: {
            for (std::size_t l = 0; l < spec.widths.size(); ++l) {
                auto& w = p.blocks[2 * l];
                const std::size_t ch_in = w.cols / kCnnKernel;
                w = glorot_init(w.rows, w.cols, ch_in * kCnnKernel, w.rows * kCnnKernel,
                                block_seed(2 * l));
            }
            auto& w = p.blocks[2 * spec.widths.size()];
            w = glorot_init(w.rows, w.cols, w.cols, w.rows, block_seed(2 * spec.widths.size()));
            break;
        }
    }
    return p;
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double activate(Activation act, double z) {
    switch (act) {
        case Activation::sigmoid: return sigmoid(z);
        case Activation::tanh: return std::tanh(z);
        case Activation::linear: return z;
    }
    return z;
}

// Derivative expressed through the activation output.
inline double activation_grad(Activation act, double a) {
    switch (act) {
        case Activation::sigmoid: return a * (1.0 - a);
        case Activation::tanh: return 1.0 - a * a;
        case Activation::linear: return 1.0;
    }
    return 1.0;
}

void dense_forward(const Tensor& w, const Tensor& b, std::span<const double> in,
                   std::vector<double>& out, Activation act) {
    out.resize(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* row = w.data.data() + i * w.cols;
        double z = b.data[i];
        for (std::size_t j = 0; j < w.cols; ++j) z += row[j] * in[j];
        out[i] = activate(act, z);
    }
}

// grads for y = W in + b given dL/dz in `delta`; optionally returns dL/din.
void dense_backward(const Tensor& w, std::span<const double> in, std::span<const double> delta,
                    Tensor& gw, Tensor& gb, std::vector<double>* din) {
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double d = delta[i];
        gb.data[i] += d;
        double* grow = gw.data.data() + i * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) grow[j] += d * in[j];
    }
    if (din) {
        din->assign(w.cols, 0.0);
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double d = delta[i];
            const double* row = w.data.data() + i * w.cols;
            for (std::size_t j = 0; j < w.cols; ++j) (*din)[j] += row[j] * d;
        }
    }
}

void check_params(const NetworkSpec& spec, const ModelParams& params) {
    // Cheap structural check; full shape validation happens at load time.
    std::size_t expected = 0;
    switch (spec.kind) {
        case Architecture::dense_autoencoder: expected = 2 * (spec.widths.size() + 1); break;
        case Architecture::lstm_predictor: expected = 5; break;
        case Architecture::cnn_predictor: expected = 2 * (spec.widths.size() + 1); break;
    }
    require(params.blocks.size() == expected, ErrorKind::dimension,
            "parameter blocks do not match the network spec");
}

// ---------------------------------------------------------------- autoencoder

void ae_forward(const NetworkSpec& spec, const ModelParams& p, std::span<const double> x,
                Workspace& ws) {
    const std::size_t layers = spec.widths.size() + 1;
    ws.a.resize(layers);
    std::span<const double> in = x;
    for (std::size_t l = 0; l < layers; ++l) {
        dense_forward(p.blocks[2 * l], p.blocks[2 * l + 1], in, ws.a[l], spec.activations[l]);
        in = ws.a[l];
    }
    ws.output = ws.a[layers - 1];
}

void ae_backward(const NetworkSpec& spec, const ModelParams& p, std::span<const double> x,
                 std::vector<double>& delta, ModelParams& g, Workspace& ws) {
    const std::size_t layers = spec.widths.size() + 1;
    for (std::size_t l = layers; l-- > 0;) {
        const std::span<const double> in = l == 0 ? x : std::span<const double>(ws.a[l - 1]);
        dense_backward(p.blocks[2 * l], in, delta, g.blocks[2 * l], g.blocks[2 * l + 1],
                       l == 0 ? nullptr : &ws.delta_prev);
        if (l == 0) break;
        const Activation act = spec.activations[l - 1];
        for (std::size_t j = 0; j < ws.delta_prev.size(); ++j)
            ws.delta_prev[j] *= activation_grad(act, ws.a[l - 1][j]);
        delta.swap(ws.delta_prev);
    }
}

// ----------------------------------------------------------------------- lstm
// Gate order within the 4h pre-activation vector: input, forget, candidate, output.
// ws.a[t] = activated gates at step t, ws.b[t] = cell state, ws.b[T + t] = hidden.

void lstm_forward(const NetworkSpec& spec, const ModelParams& p, std::span<const double> x,
                  Workspace& ws) {
    const std::size_t n = spec.channels;
    const std::size_t h = spec.widths[0];
    const std::size_t steps = spec.steps;
    const Tensor& wx = p.blocks[0];
    const Tensor& wh = p.blocks[1];
    const Tensor& bias = p.blocks[2];
    ws.a.resize(steps);
    ws.b.resize(2 * steps);
    for (std::size_t t = 0; t < steps; ++t) {
        auto& gates = ws.a[t];
        gates.resize(4 * h);
        const double* xt = x.data() + t * n;
        const double* hprev = t == 0 ? nullptr : ws.b[steps + t - 1].data();
        for (std::size_t r = 0; r < 4 * h; ++r) {
            double z = bias.data[r];
            const double* wrow = wx.data.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) z += wrow[j] * xt[j];
            if (hprev) {
                const double* hrow = wh.data.data() + r * h;
                for (std::size_t j = 0; j < h; ++j) z += hrow[j] * hprev[j];
            }
            gates[r] = (r >= 2 * h && r < 3 * h) ? std::tanh(z) : sigmoid(z);
        }
        auto& c = ws.b[t];
        auto& hs = ws.b[steps + t];
        c.resize(h);
        hs.resize(h);
        for (std::size_t k = 0; k < h; ++k) {
            const double cprev = t == 0 ? 0.0 : ws.b[t - 1][k];
            c[k] = gates[h + k] * cprev + gates[k] * gates[2 * h + k];
            hs[k] = gates[3 * h + k] * std::tanh(c[k]);
        }
    }
    dense_forward(p.blocks[3], p.blocks[4], ws.b[2 * steps - 1], ws.output, spec.activations[0]);
}

void lstm_backward(const NetworkSpec& spec, const ModelParams& p, std::span<const double> x,
                   std::vector<double>& delta, ModelParams& g, Workspace& ws) {
    const std::size_t n = spec.channels;
    const std::size_t h = spec.widths[0];
    const std::size_t steps = spec.steps;
    const Tensor& wh = p.blocks[1];

    std::vector<double> dh;
    dense_backward(p.blocks[3], ws.b[2 * steps - 1], delta, g.blocks[3], g.blocks[4], &dh);
    std::vector<double> dc(h, 0.0);
    std::vector<double> dz(4 * h);
    for (std::size_t t = steps; t-- > 0;) {
        const auto& gates = ws.a[t];
        const auto& c = ws.b[t];
        for (std::size_t k = 0; k < h; ++k) {
            const double i = gates[k], f = gates[h + k], gg = gates[2 * h + k], o = gates[3 * h + k];
            const double tc = std::tanh(c[k]);
            const double cprev = t == 0 ? 0.0 : ws.b[t - 1][k];
            const double d_o = dh[k] * tc;
            const double d_c = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = d_c * gg * i * (1.0 - i);
            dz[h + k] = d_c * cprev * f * (1.0 - f);
            dz[2 * h + k] = d_c * i * (1.0 - gg * gg);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc[k] = d_c * f;
        }
        const double* xt = x.data() + t * n;
        const double* hprev = t == 0 ? nullptr : ws.b[steps + t - 1].data();
        for (std::size_t r = 0; r < 4 * h; ++r) {
            const double d = dz[r];
            g.blocks[2].data[r] += d;
            double* gx = g.blocks[0].data.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += d * xt[j];
            if (hprev) {
                double* ghr = g.blocks[1].data.data() + r * h;
                for (std::size_t j = 0; j < h; ++j) ghr[j] += d * hprev[j];
            }
        }
        if (t > 0) {
            std::fill(dh.begin(), dh.end(), 0.0);
            for (std::size_t r = 0; r < 4 * h; ++r) {
                const double d = dz[r];
                const double* hrow = wh.data.data() + r * h;
                for (std::size_t j = 0; j < h; ++j) dh[j] += hrow[j] * d;
            }
        }
    }
}

// ------------------------------------------------------------------------ cnn
// Activations are stored time-major: value at (t, channel) lives at t * C + c.
// ws.a[2l] = conv output after activation, ws.a[2l + 1] = pooled output,
// ws.b[0] = flattened (masked) dense input.

void cnn_forward(const NetworkSpec& spec, const ModelParams& p, std::span<const double> x,
                 Workspace& ws, std::span<const double> mask) {
    const auto shape = cnn_shape(spec);
    const std::size_t layers = spec.widths.size();
    ws.a.resize(2 * layers);
    ws.b.resize(1);
    ws.pool_offsets.assign(layers + 1, 0);
    ws.argmax.clear();
    std::span<const double> in = x;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t len = shape.length_in[l];
        const std::size_t cin = shape.ch_in[l];
        const std::size_t filters = spec.widths[l];
        const Tensor& k = p.blocks[2 * l];
        const Tensor& bias = p.blocks[2 * l + 1];
        auto& z = ws.a[2 * l];
        z.resize(len * filters);
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t f = 0; f < filters; ++f) {
                double acc = bias.data[f];
                const double* krow = k.data.data() + f * k.cols;
                for (std::size_t j = 0; j < kCnnKernel; ++j) {
                    const std::size_t s = t + j;  // same padding, kernel 2: pad right by one
                    if (s >= len) continue;
                    const double* xin = in.data() + s * cin;
                    for (std::size_t c = 0; c < cin; ++c) acc += krow[c * kCnnKernel + j] * xin[c];
                }
                z[t * filters + f] = activate(spec.activations[l], acc);
            }
        }
        auto& pooled = ws.a[2 * l + 1];
        const std::size_t lout = shape.length_out[l];
        pooled.resize(lout * filters);
        ws.pool_offsets[l] = ws.argmax.size();
        if (len >= 2) {
            for (std::size_t t = 0; t < lout; ++t) {
                for (std::size_t f = 0; f < filters; ++f) {
                    const double v0 = z[(2 * t) * filters + f];
                    const double v1 = z[(2 * t + 1) * filters + f];
                    const bool first = v0 >= v1;
                    pooled[t * filters + f] = first ? v0 : v1;
                    ws.argmax.push_back(first ? 2 * t : 2 * t + 1);
                }
            }
        } else {
            pooled = z;
            for (std::size_t t = 0; t < lout * filters; ++t) ws.argmax.push_back(t / filters);
        }
        in = pooled;
    }
    auto& flat = ws.b[0];
    flat.assign(in.begin(), in.end());
    if (!mask.empty())
        for (std::size_t j = 0; j < flat.size(); ++j) flat[j] *= mask[j];
    dense_forward(p.blocks[2 * layers], p.blocks[2 * layers + 1], flat, ws.output,
                  spec.activations[layers]);
}

void cnn_backward(const NetworkSpec& spec, const ModelParams& p, std::span<const double> x,
                  std::vector<double>& delta, ModelParams& g, Workspace& ws,
                  std::span<const double> mask) {
    const auto shape = cnn_shape(spec);
    const std::size_t layers = spec.widths.size();
    std::vector<double> dflat;
    dense_backward(p.blocks[2 * layers], ws.b[0], delta, g.blocks[2 * layers],
                   g.blocks[2 * layers + 1], &dflat);
    if (!mask.empty())
        for (std::size_t j = 0; j < dflat.size(); ++j) dflat[j] *= mask[j];

    std::vector<double> dz;
    std::vector<double> din;
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t len = shape.length_in[l];
        const std::size_t cin = shape.ch_in[l];
        const std::size_t filters = spec.widths[l];
        const std::size_t lout = shape.length_out[l];
        const auto& z = ws.a[2 * l];
        dz.assign(len * filters, 0.0);
        const std::size_t off = ws.pool_offsets[l];
        for (std::size_t t = 0; t < lout; ++t)
            for (std::size_t f = 0; f < filters; ++f) {
                const std::size_t src = ws.argmax[off + t * filters + f];
                dz[src * filters + f] += dflat[t * filters + f];
            }
        for (std::size_t i = 0; i < dz.size(); ++i)
            dz[i] *= activation_grad(spec.activations[l], z[i]);

        const std::span<const double> in = l == 0 ? x : std::span<const double>(ws.a[2 * l - 1]);
        const Tensor& k = p.blocks[2 * l];
        Tensor& gk = g.blocks[2 * l];
        Tensor& gb = g.blocks[2 * l + 1];
        din.assign(len * cin, 0.0);
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t f = 0; f < filters; ++f) {
                const double d = dz[t * filters + f];
                if (d == 0.0) continue;
                gb.data[f] += d;
                const double* krow = k.data.data() + f * k.cols;
                double* gkrow = gk.data.data() + f * gk.cols;
                for (std::size_t j = 0; j < kCnnKernel; ++j) {
                    const std::size_t s = t + j;
                    if (s >= len) continue;
                    const double* xin = in.data() + s * cin;
                    double* dx = din.data() + s * cin;
                    for (std::size_t c = 0; c < cin; ++c) {
                        gkrow[c * kCnnKernel + j] += d * xin[c];
                        dx[c] += krow[c * kCnnKernel + j] * d;
                    }
                }
            }
        }
        dflat.swap(din);
    }
}

void check_input(const NetworkSpec& spec, std::span<const double> x) {
    require(x.size() == spec.input_size(), ErrorKind::dimension,
            "input has " + std::to_string(x.size()) + " values, network expects " +
                std::to_string(spec.input_size()));
}

}  // namespace

std::span<const double> forward(const NetworkSpec& spec, const ModelParams& params,
                                std::span<const double> x, Workspace& ws) {
    check_input(spec, x);
    check_params(spec, params);
    switch (spec.kind) {
        case Architecture::dense_autoencoder: ae_forward(spec, params, x, ws); break;
        case Architecture::lstm_predictor: lstm_forward(spec, params, x, ws); break;
        case Architecture::cnn_predictor: cnn_forward(spec, params, x, ws, {}); break;
    }
    return ws.output;
}

std::vector<double> forward(const NetworkSpec& spec, const ModelParams& params,
                            std::span<const double> x) {
    Workspace ws;
    auto out = forward(spec, params, x, ws);
    return {out.begin(), out.end()};
}

double mse(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::dimension, "mse operands differ in length");
    require(!a.empty(), ErrorKind::dimension, "mse of empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double accumulate_gradients(const NetworkSpec& spec, const ModelParams& params,
                            std::span<const double> x, std::span<const double> target,
                            ModelParams& grads, Workspace& ws,
                            std::span<const double> dropout_mask) {
    check_input(spec, x);
    check_params(spec, params);
    require(target.size() == spec.output_size(), ErrorKind::dimension,
            "target width does not match network output");
    require(grads.same_shape(params), ErrorKind::dimension, "gradient buffer shape mismatch");

    switch (spec.kind) {
        case Architecture::dense_autoencoder: ae_forward(spec, params, x, ws); break;
        case Architecture::lstm_predictor: lstm_forward(spec, params, x, ws); break;
        case Architecture::cnn_predictor: cnn_forward(spec, params, x, ws, dropout_mask); break;
    }
    const std::size_t n = spec.output_size();
    const Activation out_act = spec.activations.back();
    auto& delta = ws.delta;
    delta.resize(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = ws.output[i] - target[i];
        loss += diff * diff;
        delta[i] = 2.0 * diff / static_cast<double>(n) * activation_grad(out_act, ws.output[i]);
    }
    loss /= static_cast<double>(n);

    switch (spec.kind) {
        case Architecture::dense_autoencoder: ae_backward(spec, params, x, delta, grads, ws); break;
        case Architecture::lstm_predictor: lstm_backward(spec, params, x, delta, grads, ws); break;
        case Architecture::cnn_predictor:
            cnn_backward(spec, params, x, delta, grads, ws, dropout_mask);
            break;
    }
    return loss;
}

ModelParams backward(const NetworkSpec& spec, const ModelParams& params,
                     std::span<const double> x, std::span<const double> target) {
    ModelParams grads = params;
    grads.fill(0.0);
    Workspace ws;
    accumulate_gradients(spec, params, x, target, grads, ws);
    return grads;
}

std::size_t cnn_flat_size(const NetworkSpec& spec) { return cnn_shape(spec).flat; }

}  // namespace conceal::nn
