#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sthl/linalg.hpp"

namespace sthl {

// Flat registry of trainable arrays with matching gradient buffers. Iteration
// order is registration order; checkpoints and optimizer state rely on it.
class ParamStore {
public:
    struct Slot {
        std::string name;
        Matrix* value = nullptr;  // owned by the model
        Matrix grad;              // same shape, owned here
    };

    void add(std::string name, Matrix* value) {
        slots_.push_back({std::move(name), value, Matrix(value->rows(), value->cols())});
    }

    void clear() { slots_.clear(); }
    std::size_t size() const { return slots_.size(); }
    Slot& operator[](std::size_t i) { return slots_[i]; }
    const Slot& operator[](std::size_t i) const { return slots_[i]; }

    Slot* find(std::string_view name) {
        for (Slot& s : slots_) {
            if (s.name == name) return &s;
        }
        return nullptr;
    }

    const Slot* find(std::string_view name) const {
        for (const Slot& s : slots_) {
            if (s.name == name) return &s;
        }
        return nullptr;
    }

    void zero_grads() {
        for (Slot& s : slots_) s.grad.fill(0.0);
    }

    std::size_t total_params() const {
        std::size_t n = 0;
        for (const Slot& s : slots_) n += s.value->size();
        return n;
    }

    Vec flatten_values() const {
        Vec out;
        out.reserve(total_params());
        for (const Slot& s : slots_) {
            out.insert(out.end(), s.value->flat().begin(), s.value->flat().end());
        }
        return out;
    }

    Vec flatten_grads() const {
        Vec out;
        out.reserve(total_params());
        for (const Slot& s : slots_) {
            out.insert(out.end(), s.grad.flat().begin(), s.grad.flat().end());
        }
        return out;
    }

    void load_values(std::span<const double> flat) {
        std::size_t off = 0;
        for (Slot& s : slots_) {
            auto dst = s.value->flat();
            std::copy(flat.begin() + off, flat.begin() + off + dst.size(), dst.begin());
            off += dst.size();
        }
    }

    auto begin() { return slots_.begin(); }
    auto end() { return slots_.end(); }
    auto begin() const { return slots_.begin(); }
    auto end() const { return slots_.end(); }

private:
    std::vector<Slot> slots_;
};

}  // namespace sthl
