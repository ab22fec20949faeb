#include "jeca/vocab.hpp"

#include <cmath>
#include <stdexcept>

#include "jeca/rng.hpp"

namespace jeca {

namespace {

const char* kForensicTerms[] = {
    "boundary", "texture",  "lighting",  "artifact", "splice",   "seam",     "edge",
    "noise",    "blur",     "shadow",    "tone",     "grain",    "contrast", "gradient",
    "residue",  "tamper",   "inpaint",   "clone",    "halo",     "specular", "moire",
    "banding",  "compress", "sharpness", "exposure", "chroma",   "saturation", "reflection",
    "surface",  "pattern",  "region",    "consistent", "natural", "uniform",  "authentic",
    "smooth",   "coherent", "plausible", "genuine",  "original",
};

const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                         "br", "dr", "gr", "kr", "pl", "st", "tr"};
const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
const char* kCodas[] = {"", "n", "r", "s", "t", "l", "m", "nd", "rk", "st"};

}  // namespace

int Vocabulary::token_index(const std::string& token) const {
    for (int i = 0; i < size; ++i)
        if (tokens[static_cast<size_t>(i)] == token) return i;
    return -1;
}

void validate(const Vocabulary& vocab, int prompt_dim) {
    if (vocab.size != static_cast<int>(vocab.tokens.size()))
        throw std::invalid_argument("vocabulary: embedding row count must equal token count");
    if (static_cast<size_t>(vocab.size) * vocab.dim != vocab.embeddings.size())
        throw std::invalid_argument("vocabulary: embedding buffer size mismatch");
    if (vocab.dim != prompt_dim)
        throw std::invalid_argument("vocabulary: dimension must match prompt embedding dim");
}

Vocabulary build_toy_vocabulary(int size, int dim, uint64_t seed) {
    if (size < static_cast<int>(std::size(kForensicTerms)))
        throw std::invalid_argument("vocabulary size too small for the forensic term list");
    Vocabulary v;
    v.size = size;
    v.dim = dim;
    v.tokens.reserve(static_cast<size_t>(size));
    for (const char* t : kForensicTerms) {
        v.tokens.emplace_back(t);
        v.forensic_terms.insert(t);
    }
    // Fill the remainder with pronounceable synthetic words, skipping duplicates.
    Rng rng = Rng::stream(seed, "vocab-tokens");
    std::set<std::string> used(v.tokens.begin(), v.tokens.end());
    while (static_cast<int>(v.tokens.size()) < size) {
        std::string w;
        int syllables = 2 + static_cast<int>(rng.below(2));
        for (int s = 0; s < syllables; ++s) {
            w += kOnsets[rng.below(std::size(kOnsets))];
            w += kNuclei[rng.below(std::size(kNuclei))];
            w += kCodas[rng.below(std::size(kCodas))];
        }
        if (used.insert(w).second) v.tokens.push_back(w);
    }
    Rng erng = Rng::stream(seed, "vocab-embeddings");
    v.embeddings.resize(static_cast<size_t>(size) * dim);
    for (auto& x : v.embeddings) x = 0.5 * erng.normal();
    return v;
}

int nearest_token(const Vocabulary& vocab, const double* vec) {
    int best = -1;
    double best_d = 0.0;
    for (int i = 0; i < vocab.size; ++i) {
        const double* r = vocab.row(i);
        double d = 0.0;
        for (int j = 0; j < vocab.dim; ++j) {
            double diff = vec[j] - r[j];
            d += diff * diff;
        }
        if (best < 0 || d < best_d) {
            best = i;
            best_d = d;
        }
    }
    return best;
}

PromptEmbedding default_prompt(const Vocabulary& vocab, const std::vector<std::string>& words) {
    PromptEmbedding e(static_cast<int>(words.size()), vocab.dim);
    for (size_t t = 0; t < words.size(); ++t) {
        int idx = vocab.token_index(words[t]);
        if (idx < 0) throw std::invalid_argument("default_prompt: token not in vocabulary: " + words[t]);
        const double* r = vocab.row(idx);
        for (int j = 0; j < vocab.dim; ++j) e.at(static_cast<int>(t), j) = r[j];
    }
    return e;
}

}  // namespace jeca
