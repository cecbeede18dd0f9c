#include "stmae/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stmae {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'M', 'A', 'E', 'P', 'T', '1'};

template <class T>
void put(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        out.write(bytes.data(), sizeof(T));
    } else {
        out.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }
}

template <class T>
T read_le(std::istream& in, const std::filesystem::path& file) {
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), sizeof(T)))
        throw std::runtime_error("checkpoint " + file.string() + ": truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

}  // namespace

Tensor& ParameterTree::add(const std::string& path, const Tensor& value) {
    if (contains(path)) throw std::invalid_argument("parameter path already registered: " + path);
    index_[path] = entries_.size();
    entries_.emplace_back(path, Tensor::from(value.shape(),
                                             std::vector<double>(value.data().begin(),
                                                                 value.data().end()),
                                             true));
    return entries_.back().second;
}

Tensor& ParameterTree::get(const std::string& path) {
    auto it = index_.find(path);
    if (it == index_.end()) throw std::out_of_range("unknown parameter path: " + path);
    return entries_[it->second].second;
}

const Tensor& ParameterTree::get(const std::string& path) const {
    auto it = index_.find(path);
    if (it == index_.end()) throw std::out_of_range("unknown parameter path: " + path);
    return entries_[it->second].second;
}

std::size_t ParameterTree::total_numel() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
}

std::vector<std::string> ParameterTree::paths() const {
    std::vector<std::string> out;
    for (const auto& [p, _] : entries_) out.push_back(p);
    return out;
}

void ParameterTree::zero_grad() {
    for (auto& [_, t] : entries_) {
        auto g = t.mutable_grad();
        std::fill(g.begin(), g.end(), 0.0);
    }
}

ParameterTree ParameterTree::subset(const std::vector<std::string>& prefixes) const {
    ParameterTree out;
    for (const auto& [p, t] : entries_) {
        bool keep = std::any_of(prefixes.begin(), prefixes.end(),
                                [&](const std::string& pre) { return p.rfind(pre, 0) == 0; });
        if (keep) {
            out.index_[p] = out.entries_.size();
            out.entries_.emplace_back(p, t);
        }
    }
    return out;
}

ParameterTree ParameterTree::deep_copy() const {
    ParameterTree out;
    for (const auto& [p, t] : entries_) out.add(p, t);
    return out;
}

void ParameterTree::assign_from(const ParameterTree& other) {
    if (other.size() != size()) throw std::invalid_argument("assign_from: entry count differs");
    for (auto& [p, t] : entries_) {
        const Tensor& src = other.get(p);
        if (src.shape() != t.shape())
            throw std::invalid_argument("assign_from: shape mismatch at " + p + ": " +
                                        shape_str(t.shape()) + " vs " + shape_str(src.shape()));
        std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
    }
}

void ParameterTree::save(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, entries_.size());
    for (const auto& [p, t] : entries_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.size()));
        out.write(p.data(), static_cast<std::streamsize>(p.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put<std::uint64_t>(out, d);
        for (double v : t.data()) put<double>(out, v);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + file.string());
}

ParameterTree ParameterTree::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint " + file.string() + ": bad magic");
    ParameterTree tree;
    const auto count = read_le<std::uint64_t>(in, file);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = read_le<std::uint32_t>(in, file);
        std::string path(len, '\0');
        if (!in.read(path.data(), len))
            throw std::runtime_error("checkpoint " + file.string() + ": truncated");
        const auto rank = read_le<std::uint32_t>(in, file);
        Shape shape(rank);
        for (auto& d : shape) d = read_le<std::uint64_t>(in, file);
        std::vector<double> values(numel_of(shape));
        for (auto& v : values) v = read_le<double>(in, file);
        tree.add(path, Tensor::from(std::move(shape), std::move(values)));
    }
    return tree;
}

void ParameterTree::load_into(const std::filesystem::path& file) {
    ParameterTree loaded = load(file);
    for (const auto& [p, t] : loaded) {
        if (!contains(p)) throw std::runtime_error("checkpoint has unknown parameter " + p);
        if (get(p).shape() != t.shape())
            throw std::runtime_error("checkpoint shape mismatch at " + p + ": expected " +
                                     shape_str(get(p).shape()) + ", found " +
                                     shape_str(t.shape()));
    }
    for (const auto& [p, _] : entries_)
        if (!loaded.contains(p)) throw std::runtime_error("checkpoint is missing parameter " + p);
    assign_from(loaded);
}

std::uint64_t ParameterTree::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [p, t] : entries_) {
        mix(p.data(), p.size());
        for (auto d : t.shape()) mix(&d, sizeof(d));
        mix(t.data().data(), t.numel() * sizeof(double));
    }
    return h;
}

// ---------------------------------------------------------------------------

void Adam::step(ParameterTree& params) {
    for (auto& [path, t] : params)
        if (!t.has_grad()) throw std::invalid_argument("adam_step: parameter " + path + " has no gradient");

    const auto [lr, b1, b2, eps] = config_;
    for (auto& [path, t] : params) {
        auto& st = state_[path];
        if (st.m.empty()) {
            st.m.assign(t.numel(), 0.0);
            st.v.assign(t.numel(), 0.0);
        }
        ++st.t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
        auto w = t.mutable_data();
        auto g = t.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
            st.v[i] = b2 * st.v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = st.m[i] / c1;
            const double v_hat = st.v[i] / c2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

std::size_t Adam::steps_taken(const std::string& path) const {
    auto it = state_.find(path);
    return it == state_.end() ? 0 : it->second.t;
}

// ---------------------------------------------------------------------------

GradCheckResult finite_diff_check(const ScalarObjective& f, ParameterTree& params, double h) {
    auto evaluate = [&]() {
        const double v = f(params).item();
        if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: objective is not finite");
        return v;
    };

    params.zero_grad();
    Tensor loss = f(params);
    if (!std::isfinite(loss.item()))
        throw std::domain_error("finite_diff_check: objective is not finite");
    loss.backward();

    GradCheckResult result;
    for (auto& [path, t] : params) {
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto w = t.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + h;
            const double up = evaluate();
            w[i] = saved - h;
            const double down = evaluate();
            w[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::fabs(analytic[i] - numeric) /
                               std::max(1e-8, std::fabs(analytic[i]) + std::fabs(numeric));
            ++result.n_checked;
            if (result.worst_path.empty() || err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_path = path;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace stmae
