#pragma once

#include <string>
#include <vector>

#include "arc/tensor.hpp"

namespace arc {

// Named-tensor container; on disk: magic + version + entry table
// (name, shape) followed by little-endian float32 payloads in declaration
// order. Used for model checkpoints and compressed-context blobs.
class Checkpoint {
public:
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::vector<float> values;
        std::size_t numel() const {
            std::size_t n = 1;
            for (int d : shape) n *= std::size_t(d);
            return n;
        }
    };

    void add(const std::string& name, std::vector<int> shape, std::vector<float> values);
    void add(const std::string& name, const Tensor& t);

    bool has(const std::string& name) const;
    const Entry& at(const std::string& name) const;
    Tensor tensor(const std::string& name, bool requires_grad = false) const;
    const std::vector<Entry>& entries() const { return entries_; }

    void write(const std::string& path) const;
    static Checkpoint read(const std::string& path);

private:
    std::vector<Entry> entries_;
};

}  // namespace arc
