#pragma once

#include "ecorl/grid.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ecorl::agent {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Layer widths of the two-branch value network. Defaults are the production
/// shapes; tests shrink them for hand calculation and finite differences.
struct NetworkDims {
    int grid_in = 0;
    int inv_in = 0;
    int n_out = 0;
    std::array<int, 3> grid_hidden = {64, 64, 32};
    std::array<int, 3> inv_hidden = {16, 16, 16};
    int head_hidden = 16;

    static NetworkDims for_task(grid::Task task, int n_out = grid::kNumActions);

    bool operator==(const NetworkDims&) const = default;
};

template <class Scalar>
struct DenseLayer {
    Mat<Scalar> w;  // out x in
    Vec<Scalar> b;
};

/// Two-branch MLP. The grid and inventory branches apply ReLU after every
/// layer; their outputs are concatenated and fed through a head whose final
/// layer is linear.
template <class Scalar>
struct QNetwork {
    NetworkDims dims;
    std::vector<DenseLayer<Scalar>> grid_layers;
    std::vector<DenseLayer<Scalar>> inv_layers;
    std::vector<DenseLayer<Scalar>> head_layers;

    static QNetwork zeros(const NetworkDims& dims);
    /// He-style uniform fan-in init for weights, zero biases.
    static QNetwork he_init(const NetworkDims& dims, std::mt19937_64& rng);

    long param_count() const;

    /// Visits every layer in declaration order: grid, inventory, head.
    template <class F>
    void for_each_layer(F&& f) {
        for (auto& l : grid_layers) f(l);
        for (auto& l : inv_layers) f(l);
        for (auto& l : head_layers) f(l);
    }
    template <class F>
    void for_each_layer(F&& f) const {
        for (const auto& l : grid_layers) f(l);
        for (const auto& l : inv_layers) f(l);
        for (const auto& l : head_layers) f(l);
    }
};

template <class Scalar>
struct ForwardCache {
    Mat<Scalar> grid_in, inv_in, concat;
    std::vector<Mat<Scalar>> grid_acts, inv_acts, head_acts;  // post-activation
};

namespace detail {

template <class Scalar>
Mat<Scalar> stack_forward(const std::vector<DenseLayer<Scalar>>& layers, const Mat<Scalar>& x,
                          bool relu_last, std::vector<Mat<Scalar>>* acts) {
    Mat<Scalar> a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Mat<Scalar> z = (a * layers[l].w.transpose()).rowwise() + layers[l].b.transpose();
        const bool relu = relu_last || l + 1 < layers.size();
        a = relu ? z.cwiseMax(Scalar(0)) : std::move(z);
        if (acts) acts->push_back(a);
    }
    return a;
}

/// Reverse pass through one stack. d_out is the gradient wrt the stack's
/// (post-activation) output; returns the gradient wrt the stack input.
/// Gradient matrices accumulate the raw sums; the caller folds any batch-mean
/// scaling into d_out.
template <class Scalar>
Mat<Scalar> stack_backward(const std::vector<DenseLayer<Scalar>>& layers, const Mat<Scalar>& x,
                           const std::vector<Mat<Scalar>>& acts, bool relu_last,
                           Mat<Scalar> d, std::vector<DenseLayer<Scalar>>& grads) {
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const bool relu = relu_last || l + 1 < static_cast<int>(layers.size());
        if (relu)
            d = d.cwiseProduct(
                (acts[l].array() > Scalar(0)).template cast<Scalar>().matrix());
        const Mat<Scalar>& input = (l == 0) ? x : acts[l - 1];
        grads[l].w = d.transpose() * input;
        grads[l].b = d.colwise().sum().transpose();
        d = d * layers[l].w;
    }
    return d;
}

}  // namespace detail

/// Batched forward pass; rows of grid_x / inv_x are observations.
template <class Scalar>
Mat<Scalar> q_forward_batch(const QNetwork<Scalar>& net, const Mat<Scalar>& grid_x,
                            const Mat<Scalar>& inv_x, ForwardCache<Scalar>* cache = nullptr) {
    if (grid_x.cols() != net.dims.grid_in || inv_x.cols() != net.dims.inv_in)
        throw std::invalid_argument("q_forward: observation width mismatch");
    std::vector<Mat<Scalar>>* ga = cache ? &cache->grid_acts : nullptr;
    std::vector<Mat<Scalar>>* ia = cache ? &cache->inv_acts : nullptr;
    std::vector<Mat<Scalar>>* ha = cache ? &cache->head_acts : nullptr;

    Mat<Scalar> g = detail::stack_forward(net.grid_layers, grid_x, true, ga);
    Mat<Scalar> i = detail::stack_forward(net.inv_layers, inv_x, true, ia);
    Mat<Scalar> concat(grid_x.rows(), g.cols() + i.cols());
    concat << g, i;
    Mat<Scalar> q = detail::stack_forward(net.head_layers, concat, false, ha);
    if (cache) {
        cache->grid_in = grid_x;
        cache->inv_in = inv_x;
        cache->concat = std::move(concat);
    }
    return q;
}

template <class Scalar>
Vec<Scalar> q_forward(const QNetwork<Scalar>& net, const grid::Observation& obs) {
    Mat<Scalar> gx(1, static_cast<int>(obs.grid_view.size()));
    Mat<Scalar> ix(1, static_cast<int>(obs.inventory_view.size()));
    for (int j = 0; j < gx.cols(); ++j) gx(0, j) = static_cast<Scalar>(obs.grid_view[j]);
    for (int j = 0; j < ix.cols(); ++j) ix(0, j) = static_cast<Scalar>(obs.inventory_view[j]);
    return q_forward_batch(net, gx, ix).row(0).transpose();
}

/// Gradient of a scalar loss wrt every parameter, given dL/dQ for the batch.
template <class Scalar>
QNetwork<Scalar> q_backward(const QNetwork<Scalar>& net, const ForwardCache<Scalar>& cache,
                            const Mat<Scalar>& d_q) {
    QNetwork<Scalar> grads = QNetwork<Scalar>::zeros(net.dims);
    Mat<Scalar> d_concat = detail::stack_backward(net.head_layers, cache.concat, cache.head_acts,
                                                  false, d_q, grads.head_layers);
    const int g_out = net.dims.grid_hidden[2];
    Mat<Scalar> d_g = d_concat.leftCols(g_out);
    Mat<Scalar> d_i = d_concat.rightCols(d_concat.cols() - g_out);
    detail::stack_backward(net.grid_layers, cache.grid_in, cache.grid_acts, true, std::move(d_g),
                           grads.grid_layers);
    detail::stack_backward(net.inv_layers, cache.inv_in, cache.inv_acts, true, std::move(d_i),
                           grads.inv_layers);
    return grads;
}

template <class Scalar>
struct AdamState {
    Scalar lr = Scalar(3e-4);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
    long step = 0;
    QNetwork<Scalar> m, v;

    static AdamState make(const NetworkDims& dims, Scalar lr) {
        AdamState s;
        s.lr = lr;
        s.m = QNetwork<Scalar>::zeros(dims);
        s.v = QNetwork<Scalar>::zeros(dims);
        return s;
    }
};

template <class Scalar>
void adam_step(QNetwork<Scalar>& params, AdamState<Scalar>& opt, const QNetwork<Scalar>& grads) {
    opt.step += 1;
    const Scalar bc1 = Scalar(1) - std::pow(opt.beta1, Scalar(opt.step));
    const Scalar bc2 = Scalar(1) - std::pow(opt.beta2, Scalar(opt.step));
    auto update = [&](Mat<Scalar>& p, Mat<Scalar>& m, Mat<Scalar>& v, const Mat<Scalar>& g) {
        m = opt.beta1 * m + (Scalar(1) - opt.beta1) * g;
        v = opt.beta2 * v.array().matrix() + (Scalar(1) - opt.beta2) * g.cwiseProduct(g);
        p.array() -= opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
    };
    auto update_vec = [&](Vec<Scalar>& p, Vec<Scalar>& m, Vec<Scalar>& v, const Vec<Scalar>& g) {
        m = opt.beta1 * m + (Scalar(1) - opt.beta1) * g;
        v = opt.beta2 * v.array().matrix() + (Scalar(1) - opt.beta2) * g.cwiseProduct(g);
        p.array() -= opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
    };
    auto walk = [&](std::vector<DenseLayer<Scalar>>& ps, std::vector<DenseLayer<Scalar>>& ms,
                    std::vector<DenseLayer<Scalar>>& vs, const std::vector<DenseLayer<Scalar>>& gs) {
        for (std::size_t l = 0; l < ps.size(); ++l) {
            update(ps[l].w, ms[l].w, vs[l].w, gs[l].w);
            update_vec(ps[l].b, ms[l].b, vs[l].b, gs[l].b);
        }
    };
    walk(params.grid_layers, opt.m.grid_layers, opt.v.grid_layers, grads.grid_layers);
    walk(params.inv_layers, opt.m.inv_layers, opt.v.inv_layers, grads.inv_layers);
    walk(params.head_layers, opt.m.head_layers, opt.v.head_layers, grads.head_layers);
}

/// Linear exploration schedule: 1 at t=0, decaying by 1e-4 per step to 0.1.
double epsilon_schedule(std::uint64_t t);

template <class Scalar>
int greedy_action(const QNetwork<Scalar>& net, const grid::Observation& obs) {
    const Vec<Scalar> q = q_forward(net, obs);
    int best = 0;
    for (int a = 1; a < q.size(); ++a)
        if (q(a) > q(best)) best = a;  // ties keep the lowest index
    return best;
}

template <class Scalar>
int act(const QNetwork<Scalar>& net, const grid::Observation& obs, std::uint64_t t,
        std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < epsilon_schedule(t)) {
        std::uniform_int_distribution<int> dist(0, net.dims.n_out - 1);
        return dist(rng);
    }
    return greedy_action(net, obs);
}

template <class Scalar>
struct Batch {
    Mat<Scalar> grid_s, inv_s, grid_n, inv_n;
    std::vector<int> actions;
    Vec<Scalar> rewards;
    Vec<Scalar> not_terminal;  // 0 where the transition ended an episode

    int size() const { return static_cast<int>(actions.size()); }
};

/// One double-DQN update: targets select actions with the online network and
/// evaluate them with the target network; MSE on the taken actions only;
/// exact backprop; one Adam step. Returns the batch loss.
template <class Scalar>
Scalar double_dqn_update(QNetwork<Scalar>& online, const QNetwork<Scalar>& target,
                         AdamState<Scalar>& opt, const Batch<Scalar>& batch, Scalar gamma) {
    const int b = batch.size();
    if (b == 0) throw std::invalid_argument("double_dqn_update: empty batch");

    const Mat<Scalar> q_next_online = q_forward_batch(online, batch.grid_n, batch.inv_n);
    const Mat<Scalar> q_next_target = q_forward_batch(target, batch.grid_n, batch.inv_n);

    Vec<Scalar> y(b);
    for (int i = 0; i < b; ++i) {
        int astar = 0;
        for (int a = 1; a < q_next_online.cols(); ++a)
            if (q_next_online(i, a) > q_next_online(i, astar)) astar = a;
        y(i) = batch.rewards(i) + gamma * batch.not_terminal(i) * q_next_target(i, astar);
    }

    ForwardCache<Scalar> cache;
    const Mat<Scalar> q = q_forward_batch(online, batch.grid_s, batch.inv_s, &cache);

    Mat<Scalar> d_q = Mat<Scalar>::Zero(b, q.cols());
    Scalar loss = 0;
    for (int i = 0; i < b; ++i) {
        const Scalar td = q(i, batch.actions[i]) - y(i);
        loss += td * td;
        d_q(i, batch.actions[i]) = Scalar(2) * td / Scalar(b);
    }
    loss /= Scalar(b);

    const QNetwork<Scalar> grads = q_backward(online, cache, d_q);
    adam_step(online, opt, grads);
    return loss;
}

/// Hard copy of the online parameters into the target every `every` gradient
/// steps; returns whether a copy happened.
template <class Scalar>
bool sync_target(const QNetwork<Scalar>& online, QNetwork<Scalar>& target,
                 long gradient_steps_done, long every = 1000) {
    if (every <= 0 || gradient_steps_done % every != 0) return false;
    target = online;
    return true;
}

/// Fixed random target network plus a trainable predictor of the same shape;
/// the prediction error is the novelty bonus.
template <class Scalar>
struct RndPair {
    QNetwork<Scalar> target;
    QNetwork<Scalar> predictor;
    AdamState<Scalar> opt;
    Scalar bonus_scale = Scalar(0.1);

    static RndPair make(const NetworkDims& dims, Scalar lr, Scalar bonus_scale,
                        std::mt19937_64& rng) {
        RndPair p;
        p.target = QNetwork<Scalar>::he_init(dims, rng);
        p.predictor = QNetwork<Scalar>::he_init(dims, rng);
        p.opt = AdamState<Scalar>::make(dims, lr);
        p.bonus_scale = bonus_scale;
        return p;
    }
};

template <class Scalar>
Scalar rnd_bonus(const RndPair<Scalar>& pair, const grid::Observation& obs) {
    const Vec<Scalar> t = q_forward(pair.target, obs);
    const Vec<Scalar> p = q_forward(pair.predictor, obs);
    return pair.bonus_scale * (t - p).squaredNorm() / Scalar(t.size());
}

template <class Scalar>
Scalar rnd_train_step(RndPair<Scalar>& pair, const Mat<Scalar>& grid_x, const Mat<Scalar>& inv_x) {
    const int b = static_cast<int>(grid_x.rows());
    const Mat<Scalar> t = q_forward_batch(pair.target, grid_x, inv_x);
    ForwardCache<Scalar> cache;
    const Mat<Scalar> p = q_forward_batch(pair.predictor, grid_x, inv_x, &cache);
    const Mat<Scalar> err = p - t;
    const Scalar scale = Scalar(1) / Scalar(b * t.cols());
    const Scalar loss = err.squaredNorm() * scale;
    const Mat<Scalar> d_pred = Scalar(2) * scale * err;
    const QNetwork<Scalar> grads = q_backward(pair.predictor, cache, d_pred);
    adam_step(pair.predictor, pair.opt, grads);
    return loss;
}

/// Uniform FIFO ring of transitions; observations stored as packed bytes
/// (the encodings are 0/1 valued).
class ReplayBuffer {
  public:
    ReplayBuffer(int grid_dim, int inv_dim, std::size_t capacity);

    void push(const grid::Observation& obs, int action, float reward,
              const grid::Observation& next_obs, bool terminal);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }

    template <class Scalar>
    Batch<Scalar> sample(int batch_size, std::mt19937_64& rng) const;

  private:
    int grid_dim_;
    int inv_dim_;
    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::uint8_t> grid_s_, inv_s_, grid_n_, inv_n_;
    std::vector<std::int8_t> actions_;
    std::vector<float> rewards_;
    std::vector<std::uint8_t> terminal_;

    void fill_row(std::size_t idx, const grid::Observation& obs, const grid::Observation& next);
};

template <class Scalar>
Batch<Scalar> ReplayBuffer::sample(int batch_size, std::mt19937_64& rng) const {
    if (size_ == 0 || batch_size <= 0)
        throw std::invalid_argument("ReplayBuffer::sample: empty buffer or batch");
    Batch<Scalar> batch;
    batch.grid_s.resize(batch_size, grid_dim_);
    batch.inv_s.resize(batch_size, inv_dim_);
    batch.grid_n.resize(batch_size, grid_dim_);
    batch.inv_n.resize(batch_size, inv_dim_);
    batch.actions.resize(batch_size);
    batch.rewards.resize(batch_size);
    batch.not_terminal.resize(batch_size);
    std::uniform_int_distribution<std::size_t> dist(0, size_ - 1);
    for (int i = 0; i < batch_size; ++i) {
        const std::size_t r = dist(rng);
        for (int j = 0; j < grid_dim_; ++j) {
            batch.grid_s(i, j) = static_cast<Scalar>(grid_s_[r * grid_dim_ + j]);
            batch.grid_n(i, j) = static_cast<Scalar>(grid_n_[r * grid_dim_ + j]);
        }
        for (int j = 0; j < inv_dim_; ++j) {
            batch.inv_s(i, j) = static_cast<Scalar>(inv_s_[r * inv_dim_ + j]);
            batch.inv_n(i, j) = static_cast<Scalar>(inv_n_[r * inv_dim_ + j]);
        }
        batch.actions[i] = actions_[r];
        batch.rewards(i) = static_cast<Scalar>(rewards_[r]);
        batch.not_terminal(i) = terminal_[r] ? Scalar(0) : Scalar(1);
    }
    return batch;
}

// --- checkpoint io ---------------------------------------------------------

inline constexpr char kCheckpointMagic[6] = {'E', 'C', 'O', 'R', 'L', '1'};

struct Checkpoint {
    grid::Task task = grid::Task::Hunting;
    int channels = 0;
    std::uint64_t global_step = 0;
    QNetwork<float> net;
};

void save_checkpoint(const std::string& path, const QNetwork<float>& net, grid::Task task,
                     std::uint64_t global_step);
/// Throws std::runtime_error with the byte offset on magic mismatch,
/// truncation, or inconsistent shape metadata.
Checkpoint load_checkpoint(const std::string& path);

// --- template method definitions --------------------------------------------

template <class Scalar>
QNetwork<Scalar> QNetwork<Scalar>::zeros(const NetworkDims& dims) {
    QNetwork net;
    net.dims = dims;
    auto make_stack = [](std::vector<DenseLayer<Scalar>>& stack, int in,
                         std::initializer_list<int> outs) {
        for (int out : outs) {
            DenseLayer<Scalar> l;
            l.w = Mat<Scalar>::Zero(out, in);
            l.b = Vec<Scalar>::Zero(out);
            stack.push_back(std::move(l));
            in = out;
        }
    };
    make_stack(net.grid_layers, dims.grid_in,
               {dims.grid_hidden[0], dims.grid_hidden[1], dims.grid_hidden[2]});
    make_stack(net.inv_layers, dims.inv_in,
               {dims.inv_hidden[0], dims.inv_hidden[1], dims.inv_hidden[2]});
    make_stack(net.head_layers, dims.grid_hidden[2] + dims.inv_hidden[2],
               {dims.head_hidden, dims.n_out});
    return net;
}

template <class Scalar>
QNetwork<Scalar> QNetwork<Scalar>::he_init(const NetworkDims& dims, std::mt19937_64& rng) {
    QNetwork net = zeros(dims);
    net.for_each_layer([&rng](DenseLayer<Scalar>& l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index r = 0; r < l.w.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                l.w(r, c) = static_cast<Scalar>(dist(rng));
    });
    return net;
}

template <class Scalar>
long QNetwork<Scalar>::param_count() const {
    long n = 0;
    for_each_layer([&n](const DenseLayer<Scalar>& l) { n += l.w.size() + l.b.size(); });
    return n;
}

}  // namespace ecorl::agent
