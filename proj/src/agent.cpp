#include "ecorl/agent.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace ecorl::agent {

NetworkDims NetworkDims::for_task(grid::Task task, int n_out) {
    const int c = grid::channel_count(task);
    NetworkDims dims;
    dims.grid_in = 25 * c;
    dims.inv_in = c + 1;
    dims.n_out = n_out;
    return dims;
}

double epsilon_schedule(std::uint64_t t) {
    return std::max(0.1, 1.0 - 1e-4 * static_cast<double>(t));
}

ReplayBuffer::ReplayBuffer(int grid_dim, int inv_dim, std::size_t capacity)
    : grid_dim_(grid_dim), inv_dim_(inv_dim), capacity_(capacity) {
    if (grid_dim <= 0 || inv_dim <= 0 || capacity == 0)
        throw std::invalid_argument("ReplayBuffer: bad dimensions");
}

void ReplayBuffer::fill_row(std::size_t idx, const grid::Observation& obs,
                            const grid::Observation& next) {
    for (int j = 0; j < grid_dim_; ++j) {
        grid_s_[idx * grid_dim_ + j] = static_cast<std::uint8_t>(obs.grid_view[j]);
        grid_n_[idx * grid_dim_ + j] = static_cast<std::uint8_t>(next.grid_view[j]);
    }
    for (int j = 0; j < inv_dim_; ++j) {
        inv_s_[idx * inv_dim_ + j] = static_cast<std::uint8_t>(obs.inventory_view[j]);
        inv_n_[idx * inv_dim_ + j] = static_cast<std::uint8_t>(next.inventory_view[j]);
    }
}

void ReplayBuffer::push(const grid::Observation& obs, int action, float reward,
                        const grid::Observation& next_obs, bool terminal) {
    if (obs.grid_view.size() != static_cast<std::size_t>(grid_dim_) ||
        obs.inventory_view.size() != static_cast<std::size_t>(inv_dim_))
        throw std::invalid_argument("ReplayBuffer::push: observation width mismatch");
    if (size_ < capacity_) {
        grid_s_.resize((size_ + 1) * grid_dim_);
        grid_n_.resize((size_ + 1) * grid_dim_);
        inv_s_.resize((size_ + 1) * inv_dim_);
        inv_n_.resize((size_ + 1) * inv_dim_);
        actions_.resize(size_ + 1);
        rewards_.resize(size_ + 1);
        terminal_.resize(size_ + 1);
        ++size_;
    }
    fill_row(cursor_, obs, next_obs);
    actions_[cursor_] = static_cast<std::int8_t>(action);
    rewards_[cursor_] = reward;
    terminal_[cursor_] = terminal ? 1 : 0;
    cursor_ = (cursor_ + 1) % capacity_;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

struct Reader {
    std::ifstream in;
    std::size_t offset = 0;

    explicit Reader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    }
    void read(void* dst, std::size_t n, const char* what) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw std::runtime_error("checkpoint: truncated while reading " + std::string(what) +
                                     " at offset " + std::to_string(offset));
        offset += n;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        read(&v, sizeof(v), what);
        return v;
    }
    std::uint64_t u64(const char* what) {
        std::uint64_t v;
        read(&v, sizeof(v), what);
        return v;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const QNetwork<float>& net, grid::Task task,
                     std::uint64_t global_step) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(os, static_cast<std::uint32_t>(task));
    write_u32(os, static_cast<std::uint32_t>(grid::channel_count(task)));
    write_u32(os, static_cast<std::uint32_t>(net.dims.n_out));

    std::uint32_t n_layers = 0;
    net.for_each_layer([&n_layers](const DenseLayer<float>&) { ++n_layers; });
    write_u32(os, n_layers);
    net.for_each_layer([&os](const DenseLayer<float>& l) {
        write_u32(os, static_cast<std::uint32_t>(l.w.cols()));
        write_u32(os, static_cast<std::uint32_t>(l.w.rows()));
    });
    write_u64(os, global_step);

    net.for_each_layer([&os](const DenseLayer<float>& l) {
        for (Eigen::Index r = 0; r < l.w.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
                const float v = l.w(r, c);
                os.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
        for (Eigen::Index r = 0; r < l.b.size(); ++r) {
            const float v = l.b(r);
            os.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    });
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);

    char magic[sizeof(kCheckpointMagic)];
    r.read(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic at offset 0");

    const std::uint32_t task_id = r.u32("task id");
    if (task_id > static_cast<std::uint32_t>(grid::Task::FactoryWalls))
        throw std::runtime_error("checkpoint: unknown task id at offset 6");
    const auto task = static_cast<grid::Task>(task_id);

    const std::uint32_t channels = r.u32("channel count");
    const std::uint32_t n_actions = r.u32("action count");
    if (channels != static_cast<std::uint32_t>(grid::channel_count(task)))
        throw std::runtime_error("checkpoint: channel count does not match task at offset 10");

    const std::uint32_t n_layers = r.u32("layer count");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(n_layers);
    for (auto& [in, out] : shapes) {
        in = r.u32("layer shape");
        out = r.u32("layer shape");
    }

    Checkpoint ckpt;
    ckpt.task = task;
    ckpt.channels = static_cast<int>(channels);
    ckpt.global_step = r.u64("global step");

    NetworkDims dims = NetworkDims::for_task(task, static_cast<int>(n_actions));
    ckpt.net = QNetwork<float>::zeros(dims);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> expected;
    ckpt.net.for_each_layer([&expected](const DenseLayer<float>& l) {
        expected.emplace_back(static_cast<std::uint32_t>(l.w.cols()),
                              static_cast<std::uint32_t>(l.w.rows()));
    });
    if (shapes != expected)
        throw std::runtime_error("checkpoint: layer shape list does not match architecture");

    ckpt.net.for_each_layer([&r](DenseLayer<float>& l) {
        for (Eigen::Index row = 0; row < l.w.rows(); ++row)
            for (Eigen::Index col = 0; col < l.w.cols(); ++col) {
                float v;
                r.read(&v, sizeof(v), "weights");
                l.w(row, col) = v;
            }
        for (Eigen::Index row = 0; row < l.b.size(); ++row) {
            float v;
            r.read(&v, sizeof(v), "bias");
            l.b(row) = v;
        }
    });

    char extra;
    r.in.read(&extra, 1);
    if (r.in.gcount() != 0)
        throw std::runtime_error("checkpoint: trailing bytes at offset " +
                                 std::to_string(r.offset));
    return ckpt;
}

}  // namespace ecorl::agent
