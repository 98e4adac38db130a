#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "grasplab/errors.hpp"
#include "grasplab/text.hpp"

namespace grasplab {

using EmbeddingVector = std::vector<double>;

// Deterministic text embedder contract: equal canonical text must map to the
// equal vector, every vector has the provider's fixed dimension.
struct EmbeddingProvider {
    virtual ~EmbeddingProvider() = default;
    virtual size_t dimension() const = 0;
    virtual EmbeddingVector embed(const std::string& text) const = 0;
};

// Hashed bag of character trigrams over the canonical form, L2-normalized.
// Texts shorter than three characters hash as a single token. Empty canonical
// text yields the zero vector.
class TrigramHashEmbedder final : public EmbeddingProvider {
public:
    explicit TrigramHashEmbedder(size_t dim = 256) : dim_(dim) {
        if (dim_ == 0) throw ContractError("embedder dimension must be positive");
    }

    size_t dimension() const override { return dim_; }

    EmbeddingVector embed(const std::string& text) const override {
        EmbeddingVector v(dim_, 0.0);
        std::string s = canonical_key(text);
        if (s.empty()) return v;
        if (s.size() < 3) {
            v[fnv1a64(s) % dim_] += 1.0;
        } else {
            for (size_t i = 0; i + 3 <= s.size(); ++i)
                v[fnv1a64(std::string_view(s).substr(i, 3)) % dim_] += 1.0;
        }
        double norm2 = 0;
        for (double x : v) norm2 += x * x;
        if (norm2 > 0) {
            double inv = 1.0 / std::sqrt(norm2);
            for (double& x : v) x *= inv;
        }
        return v;
    }

private:
    size_t dim_;
};

// Zero vectors have similarity 0 with everything by definition.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace grasplab
