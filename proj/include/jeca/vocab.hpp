#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "jeca/core.hpp"

namespace jeca {

// Token vocabulary with fixed embeddings; anchors the coherence term and
// nearest-token projection of optimized prompts.
struct Vocabulary {
    int size = 0;
    int dim = 0;
    std::vector<double> embeddings;  // size x dim, row-major
    std::vector<std::string> tokens;
    std::set<std::string> forensic_terms;

    const double* row(int i) const { return embeddings.data() + static_cast<size_t>(i) * dim; }
    int token_index(const std::string& token) const;  // -1 when absent
};

void validate(const Vocabulary& vocab, int prompt_dim);

// Deterministic toy vocabulary: synthetic word list seeded with a curated set
// of forensic terms, embeddings drawn from a seeded Gaussian.
Vocabulary build_toy_vocabulary(int size, int dim, uint64_t seed);

// Index of the nearest vocabulary row to the given vector (L2).
int nearest_token(const Vocabulary& vocab, const double* vec);

// Prompt initialised from existing vocabulary rows (coherence starts at zero).
PromptEmbedding default_prompt(const Vocabulary& vocab, const std::vector<std::string>& words);

}  // namespace jeca
