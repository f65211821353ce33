#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "rts/errors.hpp"

namespace rts {

/// Bounded FIFO of training samples for an online learner.
///
/// The frame index of the first insertion is the pinned (initial) frame: every
/// entry carrying it, augmentations included, survives eviction. When full, the
/// oldest non-pinned entry is dropped.
///
/// Sample weights always sum to one. With update_rate == 0 they are uniform;
/// otherwise each new sample receives weight `update_rate` after all existing
/// weights are scaled by (1 - update_rate).
template <class Sample>
class SampleMemory {
public:
    struct Entry {
        Sample sample;
        double weight = 1.0;
        int frame_index = 0;
        bool pinned = false;
    };

    explicit SampleMemory(int capacity = 32, double update_rate = 0.0) : capacity_(capacity), update_rate_(update_rate) {
        if (capacity <= 0) throw ConfigError("memory capacity must be positive");
        if (update_rate < 0.0 || update_rate >= 1.0) throw ConfigError("memory update rate must lie in [0, 1)");
    }

    void insert(Sample sample, int frame_index) {
        if (!pinned_frame_) pinned_frame_ = frame_index;
        const bool pinned = frame_index == *pinned_frame_;
        if (update_rate_ > 0.0 && !pinned) {
            for (Entry& e : entries_) e.weight *= 1.0 - update_rate_;
            entries_.push_back({std::move(sample), update_rate_, frame_index, false});
        } else {
            entries_.push_back({std::move(sample), 0.0, frame_index, pinned});
            if (update_rate_ > 0.0) share_among_pinned();
        }
        if (static_cast<int>(entries_.size()) > capacity_) evict_oldest();
        normalize();
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    int capacity() const { return capacity_; }
    double update_rate() const { return update_rate_; }
    std::optional<int> pinned_frame() const { return pinned_frame_; }

    std::vector<double> weights() const {
        std::vector<double> w;
        w.reserve(entries_.size());
        for (const Entry& e : entries_) w.push_back(e.weight);
        return w;
    }

private:
    // Initial samples split the weight they held before the latest addition.
    void share_among_pinned() {
        double total = 0.0;
        int count = 0;
        for (const Entry& e : entries_)
            if (e.pinned) {
                total += e.weight;
                ++count;
            }
        if (total <= 0.0) total = 1.0;
        for (Entry& e : entries_)
            if (e.pinned) e.weight = total / count;
    }

    void evict_oldest() {
        auto it = std::find_if(entries_.begin(), entries_.end(), [](const Entry& e) { return !e.pinned; });
        if (it == entries_.end()) throw ConfigError("memory capacity is smaller than the number of initial samples");
        entries_.erase(it);
    }

    void normalize() {
        if (update_rate_ == 0.0) {
            for (Entry& e : entries_) e.weight = 1.0 / static_cast<double>(entries_.size());
            return;
        }
        double total = 0.0;
        for (const Entry& e : entries_) total += e.weight;
        for (Entry& e : entries_) e.weight /= total;
    }

    int capacity_;
    double update_rate_;
    std::optional<int> pinned_frame_;
    std::vector<Entry> entries_;
};

}  // namespace rts
