#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stmae/tensor.hpp"

namespace stmae {

/// Named learnable arrays in insertion order.
///
/// Entries are Tensor handles, so a subset() shares storage with its parent;
/// the training code uses that to hand an optimizer only the parameters a
/// stage is allowed to touch.
class ParameterTree {
public:
    using Entry = std::pair<std::string, Tensor>;

    /// Registers a fresh leaf holding `value`'s data with requires_grad set.
    Tensor& add(const std::string& path, const Tensor& value);

    bool contains(const std::string& path) const { return index_.count(path) != 0; }
    Tensor& get(const std::string& path);
    const Tensor& get(const std::string& path) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t total_numel() const;
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    std::vector<std::string> paths() const;

    /// Allocates (if needed) and zeroes every gradient slot.
    void zero_grad();

    /// Shares storage with this tree; keeps entries whose path starts with
    /// any of the prefixes, in this tree's order.
    ParameterTree subset(const std::vector<std::string>& prefixes) const;
    /// Independent copy of all values.
    ParameterTree deep_copy() const;
    /// Overwrites values from `other`; paths and shapes must match exactly.
    void assign_from(const ParameterTree& other);

    /// Checkpoint: magic "STMAEPT1", u64 count, then per entry u32 path
    /// length, path bytes, u32 rank, u64 extents, little-endian float64 data.
    void save(const std::filesystem::path& file) const;
    static ParameterTree load(const std::filesystem::path& file);
    /// Loads a checkpoint into existing entries, rejecting unknown paths,
    /// missing paths and shape mismatches.
    void load_into(const std::filesystem::path& file);

    /// FNV-1a over paths, shapes and value bytes. Used in run manifests.
    std::uint64_t fingerprint() const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias-corrected moments. Moment state is keyed by path and
/// persists across step() calls.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// One update of every entry. Throws std::invalid_argument naming the
    /// first parameter without a gradient slot.
    void step(ParameterTree& params);

    const AdamConfig& config() const { return config_; }
    std::size_t steps_taken(const std::string& path) const;

private:
    struct Moments {
        std::vector<double> m, v;
        std::size_t t = 0;
    };
    AdamConfig config_;
    std::map<std::string, Moments> state_;
};

using ScalarObjective = std::function<Tensor(ParameterTree&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_path;
    std::size_t worst_index = 0;
    std::size_t n_checked = 0;
};

/// Compares reverse-mode gradients with central differences of step `h` for
/// every scalar in `params`. Error per entry is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// Throws std::domain_error if f evaluates to a non-finite value.
GradCheckResult finite_diff_check(const ScalarObjective& f, ParameterTree& params,
                                  double h = 1e-5);

}  // namespace stmae
