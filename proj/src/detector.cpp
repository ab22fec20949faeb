#include "jeca/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "jeca/forgery.hpp"
#include "jeca/metrics.hpp"
#include "jeca/rng.hpp"

namespace jeca {

void validate(const DetectorConfig& cfg) {
    if (cfg.image_size < 32) throw std::invalid_argument("detector: image_size must be >= 32");
    if (cfg.image_size % cfg.patch != 0)
        throw std::invalid_argument("detector: image_size must be divisible by patch");
    if (cfg.dim % cfg.heads != 0) throw std::invalid_argument("detector: dim must be divisible by heads");
    if (cfg.layers < 2) throw std::invalid_argument("detector: need >= 2 layers for later-layer aggregation");
    if (cfg.prompt_tokens < 1) throw std::invalid_argument("detector: need >= 1 prompt token");
}

int ToyDetectorParams::index_of(const std::string& name) const {
    for (size_t i = 0; i < params.size(); ++i)
        if (params[i].name == name) return static_cast<int>(i);
    throw std::invalid_argument("detector: unknown parameter " + name);
}

const NamedParam& ToyDetectorParams::at(const std::string& name) const {
    return params[static_cast<size_t>(index_of(name))];
}

namespace {

const char* kPromptWords[4] = {"authentic", "texture", "boundary", "lighting"};

void add_param(ToyDetectorParams& p, const std::string& name, int rows, int cols, Rng& rng,
               double std_dev) {
    NamedParam np;
    np.name = name;
    np.rows = rows;
    np.cols = cols;
    np.v.resize(static_cast<size_t>(rows) * cols);
    for (auto& x : np.v) x = std_dev == 0.0 ? 0.0 : std_dev * rng.normal();
    p.params.push_back(std::move(np));
}

void add_const_param(ToyDetectorParams& p, const std::string& name, int rows, int cols, double value) {
    NamedParam np;
    np.name = name;
    np.rows = rows;
    np.cols = cols;
    np.v.assign(static_cast<size_t>(rows) * cols, value);
    p.params.push_back(std::move(np));
}

double xavier(int fan_in, int fan_out) { return std::sqrt(2.0 / (fan_in + fan_out)); }

}  // namespace

ToyDetectorParams init_detector_params(const DetectorConfig& cfg) {
    validate(cfg);
    ToyDetectorParams p;
    p.cfg = cfg;
    p.vocabulary = build_toy_vocabulary(cfg.vocab_size, cfg.dim, cfg.seed);
    std::vector<std::string> words;
    for (int i = 0; i < cfg.prompt_tokens; ++i) words.emplace_back(kPromptWords[i % 4]);
    p.prompt = default_prompt(p.vocabulary, words);

    Rng rng = Rng::stream(cfg.seed, "detector-init");
    const int d = cfg.dim;
    const int pd = cfg.patch * cfg.patch * ImageTensor::channels;
    add_param(p, "patch_proj.w", pd, d, rng, xavier(pd, d));
    add_const_param(p, "patch_proj.b", 1, d, 0.0);
    add_param(p, "pos", cfg.patches(), d, rng, 0.02);
    add_param(p, "cls", 1, d, rng, 0.02);
    // Residual branches start small and heads start at zero; the toy model
    // otherwise spends many epochs in a flat region before separating.
    const double resid = 1.0 / std::sqrt(2.0 * cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        add_const_param(p, base + "ln1.g", 1, d, 1.0);
        add_const_param(p, base + "ln1.b", 1, d, 0.0);
        for (const char* w : {"wq", "wk", "wv"})
            add_param(p, base + "attn." + w, d, d, rng, xavier(d, d));
        add_param(p, base + "attn.wo", d, d, rng, xavier(d, d) * resid);
        for (const char* b : {"bq", "bk", "bv", "bo"}) add_const_param(p, base + "attn." + b, 1, d, 0.0);
        add_const_param(p, base + "ln2.g", 1, d, 1.0);
        add_const_param(p, base + "ln2.b", 1, d, 0.0);
        add_param(p, base + "mlp.w1", d, cfg.mlp_hidden, rng, xavier(d, cfg.mlp_hidden));
        add_const_param(p, base + "mlp.b1", 1, cfg.mlp_hidden, 0.0);
        add_param(p, base + "mlp.w2", cfg.mlp_hidden, d, rng, xavier(cfg.mlp_hidden, d) * resid);
        add_const_param(p, base + "mlp.b2", 1, d, 0.0);
    }
    add_const_param(p, "final_ln.g", 1, d, 1.0);
    add_const_param(p, "final_ln.b", 1, d, 0.0);
    add_const_param(p, "head.cls.w", d, 2, 0.0);
    add_const_param(p, "head.cls.b", 1, 2, 0.0);
    add_const_param(p, "head.mask.w", d, 1, 0.0);
    add_const_param(p, "head.mask.b", 1, 1, 0.0);
    add_const_param(p, "head.evidence.w", 1, 1, 1.0);
    add_const_param(p, "head.pool.w", d, 2, 0.0);
    return p;
}

// ---- checkpoint ---------------------------------------------------------------
// Binary layout (little-endian): magic "J2DT", u32 version, the nine config
// integers, vocabulary (tokens, forensic terms, embeddings), default prompt,
// then every NamedParam in declaration order as (name, rows, cols, doubles).

namespace {

void w_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void w_u64(std::ofstream& f, uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
void w_str(std::ofstream& f, const std::string& s) {
    w_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void w_doubles(std::ofstream& f, const std::vector<double>& v) {
    w_u64(f, v.size());
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

uint32_t r_u32(std::ifstream& f) {
    uint32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t r_u64(std::ifstream& f) {
    uint64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string r_str(std::ifstream& f) {
    uint32_t n = r_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    return s;
}
std::vector<double> r_doubles(std::ifstream& f) {
    uint64_t n = r_u64(f);
    std::vector<double> v(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    return v;
}

}  // namespace

void save_detector(const std::string& path, const ToyDetectorParams& p) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("detector: cannot write " + path);
    f.write("J2DT", 4);
    w_u32(f, 1);
    for (int x : {p.cfg.image_size, p.cfg.patch, p.cfg.dim, p.cfg.layers, p.cfg.heads,
                  p.cfg.mlp_hidden, p.cfg.prompt_tokens, p.cfg.vocab_size})
        w_u32(f, static_cast<uint32_t>(x));
    w_u64(f, p.cfg.seed);
    w_u32(f, static_cast<uint32_t>(p.vocabulary.size));
    w_u32(f, static_cast<uint32_t>(p.vocabulary.dim));
    for (const auto& t : p.vocabulary.tokens) w_str(f, t);
    w_u32(f, static_cast<uint32_t>(p.vocabulary.forensic_terms.size()));
    for (const auto& t : p.vocabulary.forensic_terms) w_str(f, t);
    w_doubles(f, p.vocabulary.embeddings);
    w_u32(f, static_cast<uint32_t>(p.prompt.tokens));
    w_u32(f, static_cast<uint32_t>(p.prompt.dim));
    w_doubles(f, p.prompt.v);
    w_u32(f, static_cast<uint32_t>(p.params.size()));
    for (const auto& np : p.params) {
        w_str(f, np.name);
        w_u32(f, static_cast<uint32_t>(np.rows));
        w_u32(f, static_cast<uint32_t>(np.cols));
        w_doubles(f, np.v);
    }
    if (!f) throw std::runtime_error("detector: short write to " + path);
}

ToyDetectorParams load_detector(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("detector: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "J2DT", 4) != 0) throw std::runtime_error("detector: bad checkpoint magic");
    if (r_u32(f) != 1) throw std::runtime_error("detector: unsupported checkpoint version");
    ToyDetectorParams p;
    p.cfg.image_size = static_cast<int>(r_u32(f));
    p.cfg.patch = static_cast<int>(r_u32(f));
    p.cfg.dim = static_cast<int>(r_u32(f));
    p.cfg.layers = static_cast<int>(r_u32(f));
    p.cfg.heads = static_cast<int>(r_u32(f));
    p.cfg.mlp_hidden = static_cast<int>(r_u32(f));
    p.cfg.prompt_tokens = static_cast<int>(r_u32(f));
    p.cfg.vocab_size = static_cast<int>(r_u32(f));
    p.cfg.seed = r_u64(f);
    p.vocabulary.size = static_cast<int>(r_u32(f));
    p.vocabulary.dim = static_cast<int>(r_u32(f));
    p.vocabulary.tokens.resize(static_cast<size_t>(p.vocabulary.size));
    for (auto& t : p.vocabulary.tokens) t = r_str(f);
    uint32_t nft = r_u32(f);
    for (uint32_t i = 0; i < nft; ++i) p.vocabulary.forensic_terms.insert(r_str(f));
    p.vocabulary.embeddings = r_doubles(f);
    p.prompt.tokens = static_cast<int>(r_u32(f));
    p.prompt.dim = static_cast<int>(r_u32(f));
    p.prompt.v = r_doubles(f);
    uint32_t np = r_u32(f);
    p.params.resize(np);
    for (auto& param : p.params) {
        param.name = r_str(f);
        param.rows = static_cast<int>(r_u32(f));
        param.cols = static_cast<int>(r_u32(f));
        param.v = r_doubles(f);
    }
    if (!f) throw std::runtime_error("detector: truncated checkpoint " + path);
    validate(p.cfg);
    return p;
}

// ---- forward -------------------------------------------------------------------

namespace {

Tensor bilinear_upsample_matrix(int image_size, int patch) {
    const int grid = image_size / patch;
    const int hw = image_size * image_size;
    std::vector<double> u(static_cast<size_t>(hw) * grid * grid, 0.0);
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            double gy = (y + 0.5) / patch - 0.5;
            double gx = (x + 0.5) / patch - 0.5;
            gy = std::clamp(gy, 0.0, static_cast<double>(grid - 1));
            gx = std::clamp(gx, 0.0, static_cast<double>(grid - 1));
            int y0 = static_cast<int>(std::floor(gy));
            int x0 = static_cast<int>(std::floor(gx));
            int y1 = std::min(y0 + 1, grid - 1);
            int x1 = std::min(x0 + 1, grid - 1);
            double fy = gy - y0, fx = gx - x0;
            size_t row = static_cast<size_t>(y * image_size + x) * grid * grid;
            u[row + static_cast<size_t>(y0 * grid + x0)] += (1 - fy) * (1 - fx);
            u[row + static_cast<size_t>(y0 * grid + x1)] += (1 - fy) * fx;
            u[row + static_cast<size_t>(y1 * grid + x0)] += fy * (1 - fx);
            u[row + static_cast<size_t>(y1 * grid + x1)] += fy * fx;
        }
    }
    return constant(hw, grid * grid, std::move(u));
}

std::shared_ptr<const std::vector<int>> patchify_index(int image_size, int patch) {
    const int grid = image_size / patch;
    auto idx = std::make_shared<std::vector<int>>();
    idx->reserve(static_cast<size_t>(image_size) * image_size * ImageTensor::channels);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int c = 0; c < ImageTensor::channels; ++c) {
                        int y = py * patch + dy, x = px * patch + dx;
                        idx->push_back((y * image_size + x) * ImageTensor::channels + c);
                    }
    return idx;
}

}  // namespace

ToyDetector::ToyDetector(ToyDetectorParams params) : params_(std::move(params)) {
    validate(params_.cfg);
    validate(params_.vocabulary, params_.cfg.dim);
    weight_nodes_.reserve(params_.params.size());
    for (const auto& np : params_.params)
        weight_nodes_.push_back(constant(np.rows, np.cols, np.v));
    upsample_ = bilinear_upsample_matrix(params_.cfg.image_size, params_.cfg.patch);
    patch_index_ = patchify_index(params_.cfg.image_size, params_.cfg.patch);
}

Tensor ToyDetector::image_node(const ImageTensor& img, bool needs_grad) const {
    if (img.height != params_.cfg.image_size || img.width != params_.cfg.image_size)
        throw std::invalid_argument("detector: image size mismatch");
    return needs_grad ? leaf(img.numel(), 1, img.v) : constant(img.numel(), 1, img.v);
}

Tensor ToyDetector::embedding_node(const PromptEmbedding& e, bool needs_grad) const {
    if (e.dim != params_.cfg.dim) throw std::invalid_argument("detector: embedding dim mismatch");
    return needs_grad ? leaf(e.tokens, e.dim, e.v) : constant(e.tokens, e.dim, e.v);
}

DetectorForward ToyDetector::forward(const Tensor& image_flat, const Tensor& embedding,
                                     const std::vector<Tensor>* trainable_params) const {
    const DetectorConfig& cfg = params_.cfg;
    if (image_flat.numel() != cfg.image_size * cfg.image_size * ImageTensor::channels)
        throw std::invalid_argument("detector: image node shape mismatch");
    if (embedding.cols() != cfg.dim) throw std::invalid_argument("detector: embedding dim mismatch");
    const std::vector<Tensor>& w = trainable_params ? *trainable_params : weight_nodes_;
    if (w.size() != params_.params.size())
        throw std::invalid_argument("detector: parameter node count mismatch");
    auto P = [&](const std::string& name) -> const Tensor& {
        return w[static_cast<size_t>(params_.index_of(name))];
    };

    const int n_prompt = embedding.rows();
    const int patches = cfg.patches();
    const int d = cfg.dim;
    const int dh = cfg.head_dim();
    const int seq = 1 + n_prompt + patches;

    Tensor patch_pixels = reshape(gather(image_flat, patch_index_), patches,
                                  cfg.patch * cfg.patch * ImageTensor::channels);
    Tensor patch_tokens = add(linear(patch_pixels, P("patch_proj.w"), P("patch_proj.b")), P("pos"));
    Tensor x = concat_rows({P("cls"), embedding, patch_tokens});

    DetectorForward out;
    out.image = image_flat;
    out.embedding = embedding;
    out.prompt_tokens = n_prompt;
    out.patch_grid = cfg.patch_grid();
    out.attn.resize(static_cast<size_t>(cfg.layers));

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        Tensor xn = layer_norm_rows(x, P(base + "ln1.g"), P(base + "ln1.b"));
        Tensor q = linear(xn, P(base + "attn.wq"), P(base + "attn.bq"));
        Tensor k = linear(xn, P(base + "attn.wk"), P(base + "attn.bk"));
        Tensor v = linear(xn, P(base + "attn.wv"), P(base + "attn.bv"));
        Tensor heads_cat;
        for (int h = 0; h < cfg.heads; ++h) {
            Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
            Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
            Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
            Tensor a = softmax_rows(scale(matmul(qh, transpose(kh)), attn_scale));
            out.attn[static_cast<size_t>(l)].push_back(a);
            Tensor oh = pad_cols(matmul(a, vh), h * dh, d);
            heads_cat = h == 0 ? oh : add(heads_cat, oh);
        }
        x = add(x, linear(heads_cat, P(base + "attn.wo"), P(base + "attn.bo")));
        Tensor xm = layer_norm_rows(x, P(base + "ln2.g"), P(base + "ln2.b"));
        Tensor hidden = gelu(linear(xm, P(base + "mlp.w1"), P(base + "mlp.b1")));
        x = add(x, linear(hidden, P(base + "mlp.w2"), P(base + "mlp.b2")));
        out.layer_states.push_back(x);
    }
    Tensor xf = layer_norm_rows(x, P("final_ln.g"), P("final_ln.b"));
    Tensor cls_state = slice_rows(xf, 0, 1);
    out.patch_features = slice_rows(xf, 1 + n_prompt, seq);
    out.mask_patch_logits = linear(out.patch_features, P("head.mask.w"), P("head.mask.b"));
    out.mask_logits = matmul(upsample_, out.mask_patch_logits);
    // Fake-class logit additionally pools localization evidence: a smooth
    // "any tampered patch" aggregate, which ties classification to the
    // localization pathway.
    double peak = out.mask_patch_logits.at(0);
    for (int i = 1; i < out.mask_patch_logits.numel(); ++i)
        peak = std::max(peak, out.mask_patch_logits.at(i));
    Tensor lse = add_scalar(log_t(sum(exp_t(add_scalar(out.mask_patch_logits, -peak)))), peak);
    // Zero for an all-zero localization map, so the coupling starts neutral.
    Tensor evidence = mul(add_scalar(lse, -std::log(static_cast<double>(patches))),
                          P("head.evidence.w"));
    // Mean-pooled patch state gives the classifier a direct view of global
    // patch statistics alongside the CLS token and localization evidence.
    Tensor pooled = scale(col_sum(out.patch_features), 1.0 / patches);
    out.class_logits = add(add(linear(cls_state, P("head.cls.w"), P("head.cls.b")),
                               matmul(pooled, P("head.pool.w"))),
                           pad_cols(reshape(evidence, 1, 1), 1, 2));
    return out;
}

DetectorPrediction ToyDetector::interpret(const DetectorForward& fwd) const {
    DetectorPrediction pred;
    double lr_ = fwd.class_logits.at(0), lf = fwd.class_logits.at(1);
    double m = std::max(lr_, lf);
    double er = std::exp(lr_ - m), ef = std::exp(lf - m);
    pred.p_fake = ef / (er + ef);
    pred.label = lf > lr_ ? Label::Fake : Label::Real;

    const int hw = config().image_size * config().image_size;
    pred.mask_prob.resize(static_cast<size_t>(hw));
    pred.mask = TamperMask(config().image_size, config().image_size, TamperMask::Source::predicted);
    for (int i = 0; i < hw; ++i) {
        double z = fwd.mask_logits.at(i);
        double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        pred.mask_prob[static_cast<size_t>(i)] = p;
        pred.mask.v[static_cast<size_t>(i)] = p >= 0.5 ? 1 : 0;
    }

    // Argmax region of the uniform head/layer average over the later layers.
    const int grid = fwd.patch_grid;
    std::vector<double> acc(static_cast<size_t>(grid) * grid, 0.0);
    for (int l = config().agg_layer_lo(); l < config().agg_layer_hi(); ++l)
        for (const Tensor& a : fwd.attn[static_cast<size_t>(l)])
            for (int p = 0; p < grid * grid; ++p)
                acc[static_cast<size_t>(p)] += a.at(0, 1 + fwd.prompt_tokens + p);
    int best = static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    pred.explanation = render_explanation(pred.label, best / grid, best % grid, grid);
    return pred;
}

std::string render_explanation(Label label, int region_row, int region_col, int grid) {
    static const char* kRows[3] = {"upper", "middle", "lower"};
    static const char* kCols[3] = {"left", "center", "right"};
    int ry = std::min(2, region_row * 3 / std::max(1, grid));
    int rx = std::min(2, region_col * 3 / std::max(1, grid));
    std::string region = std::string(kRows[ry]) + "-" + kCols[rx];
    if (region == "middle-center") region = "central";
    if (label == Label::Real)
        return "The image appears authentic; lighting and texture in the " + region +
               " region are consistent and natural, with no tampering traces.";
    return "Manipulation indicators concentrate in the " + region +
           " region: boundary artifacts and texture inconsistency suggest tampering.";
}

// ---- training ----------------------------------------------------------------

namespace {

struct Sample {
    ImageTensor image;
    Label label = Label::Real;
    std::vector<double> patch_targets;  // tampered fraction per patch; empty for reals
    TamperMask gt_mask;                 // fakes only
};

std::vector<double> patch_fractions(const TamperMask& mask, int patch) {
    const int grid = mask.height / patch;
    std::vector<double> t(static_cast<size_t>(grid) * grid, 0.0);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            int cnt = 0;
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx) cnt += mask.at(py * patch + dy, px * patch + dx);
            t[static_cast<size_t>(py * grid + px)] = static_cast<double>(cnt) / (patch * patch);
        }
    return t;
}

// Numerically stable mean binary cross-entropy with soft targets and a
// positive-class weight:
//   mean over logits of (1 - t + pw*t) * softplus(z) - pw * t * z,
// softplus(z) = relu(z) + log(1+exp(-|z|)).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, double pos_weight) {
    Tensor softplus = add(relu(logits), log_t(add_scalar(exp_t(neg(abs_t(logits))), 1.0)));
    Tensor w = add_scalar(scale(targets, pos_weight - 1.0), 1.0);
    return mean(sub(mul(w, softplus), scale(mul(targets, logits), pos_weight)));
}

}  // namespace

ToyDetectorParams train_toy_detector(const std::string& dataset_dir, const TrainOptions& opt,
                                     const DetectorConfig& cfg, TrainReport* report,
                                     std::ostream* progress) {
    DatasetManifest manifest = read_manifest(dataset_dir);
    ToyDetectorParams params = init_detector_params(cfg);

    std::vector<Sample> train, test;
    for (const DatasetItem& item : manifest.items) {
        Sample s;
        bool fake = item.kind != "real";
        s.label = fake ? Label::Fake : Label::Real;
        std::string sub = fake ? "fake" : "real";
        s.image = load_image(dataset_dir + "/" + sub + "/" + item.id + ".png");
        if (s.image.height != cfg.image_size)
            throw std::invalid_argument("train: dataset image size does not match detector config");
        if (fake) {
            s.gt_mask = load_mask(dataset_dir + "/masks/" + item.id + ".png");
            s.patch_targets = patch_fractions(s.gt_mask, cfg.patch);
        } else {
            s.patch_targets.assign(static_cast<size_t>(cfg.patches()), 0.0);
        }
        (item.split == "train" ? train : test).push_back(std::move(s));
    }
    if (train.empty() || test.empty()) throw std::runtime_error("train: dataset has empty split");

    // Adam state over the flat parameter list.
    std::vector<std::vector<double>> m(params.params.size()), v(params.params.size());
    for (size_t i = 0; i < params.params.size(); ++i) {
        m[i].assign(params.params[i].v.size(), 0.0);
        v[i].assign(params.params[i].v.size(), 0.0);
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long step = 0;

    Rng shuffle_rng = Rng::stream(opt.seed, "train-shuffle");
    Rng noise_rng = Rng::stream(opt.seed, "train-noise");
    Tensor prompt_node = constant(params.prompt.tokens, params.prompt.dim, params.prompt.v);

    ToyDetector scratch(params);  // fixed helpers: patch index + upsample
    auto evaluate = [&](const ToyDetector& det) {
        int correct = 0;
        double iou_sum = 0.0;
        int iou_n = 0;
        for (const Sample& s : test) {
            DetectorPrediction pred = det.predict(s.image);
            if (pred.label == s.label) ++correct;
            if (s.label == Label::Fake && pred.label == Label::Fake) {
                iou_sum += iou(pred.mask, s.gt_mask);
                ++iou_n;
            }
        }
        return std::pair<double, double>(static_cast<double>(correct) / test.size(),
                                         iou_n ? iou_sum / iou_n : 0.0);
    };

    std::vector<std::string> log_lines;
    log_lines.emplace_back("epoch,loss,accuracy,iou");
    double acc = 0.0, iou_fake = 0.0;

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        // Cosine decay keeps the late phase stable once the heads separate.
        const double lr_now =
            opt.lr * (0.5 + 0.5 * std::cos(M_PI * (epoch - 1) / std::max(1, opt.epochs)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        size_t pos = 0;
        std::vector<std::vector<double>> acc_grad(params.params.size());
        while (pos < order.size()) {
            size_t batch_end = std::min(pos + static_cast<size_t>(opt.batch), order.size());
            std::vector<Tensor> nodes;
            nodes.reserve(params.params.size());
            for (const auto& np : params.params) nodes.push_back(leaf(np.rows, np.cols, np.v));
            for (size_t pi = 0; pi < acc_grad.size(); ++pi)
                acc_grad[pi].assign(params.params[pi].v.size(), 0.0);

            // Per-sample backward keeps the live graph small; gradients are
            // accumulated numerically in a fixed order.
            const double inv_batch = 1.0 / static_cast<double>(batch_end - pos);
            for (size_t bi = pos; bi < batch_end; ++bi) {
                const Sample& s = train[order[bi]];
                std::vector<double> img = s.image.v;
                if (opt.noise_augment > 0.0)
                    for (auto& px : img)
                        px = std::clamp(px + noise_rng.uniform(-opt.noise_augment, opt.noise_augment),
                                        0.0, 1.0);
                const int img_n = static_cast<int>(img.size());
                Tensor img_node = constant(img_n, 1, std::move(img));
                DetectorForward fwd = scratch.forward(img_node, prompt_node, &nodes);
                Tensor cls_loss = cross_entropy_with_logits(fwd.class_logits, class_index(s.label));
                if (opt.label_smoothing > 0.0) {
                    Tensor other = cross_entropy_with_logits(
                        fwd.class_logits, 1 - class_index(s.label));
                    cls_loss = add(scale(cls_loss, 1.0 - opt.label_smoothing),
                                   scale(other, opt.label_smoothing));
                }
                Tensor targets = constant(cfg.patches(), 1, s.patch_targets);
                Tensor mask_loss = bce_with_logits(fwd.mask_patch_logits, targets, opt.mask_pos_weight);
                Tensor sample_loss = add(cls_loss, scale(mask_loss, opt.mask_loss_weight));
                loss_sum += sample_loss.item();

                std::vector<Tensor> grads = grad(sample_loss, nodes);
                for (size_t pi = 0; pi < acc_grad.size(); ++pi) {
                    const auto& gv = grads[pi].data();
                    for (size_t j = 0; j < acc_grad[pi].size(); ++j)
                        acc_grad[pi][j] += inv_batch * gv[j];
                }
            }

            ++step;
            const double corr = std::sqrt(1.0 - std::pow(b2, step)) / (1.0 - std::pow(b1, step));
            for (size_t pi = 0; pi < params.params.size(); ++pi) {
                auto& pv = params.params[pi].v;
                for (size_t j = 0; j < pv.size(); ++j) {
                    double g = acc_grad[pi][j];
                    m[pi][j] = b1 * m[pi][j] + (1 - b1) * g;
                    v[pi][j] = b2 * v[pi][j] + (1 - b2) * g * g;
                    pv[j] -= lr_now * corr * m[pi][j] / (std::sqrt(v[pi][j]) + eps);
                }
            }
            pos = batch_end;
        }

        if (epoch % opt.log_every == 0 || epoch == opt.epochs) {
            ToyDetector det(params);
            std::tie(acc, iou_fake) = evaluate(det);
            char line[128];
            std::snprintf(line, sizeof line, "%d,%.6f,%.4f,%.4f", epoch,
                          loss_sum / static_cast<double>(train.size()), acc, iou_fake);
            log_lines.emplace_back(line);
            if (progress) (*progress) << "epoch " << epoch << ": " << line << "\n";
        }
    }

    if (report) {
        report->test_accuracy = acc;
        report->clean_fake_iou = iou_fake;
        report->log_lines = log_lines;
    }
    if (acc < opt.min_accuracy)
        throw std::runtime_error("train: detector failed to converge, accuracy " + std::to_string(acc));
    if (iou_fake < opt.min_mask_iou)
        throw std::runtime_error("train: mask head below IoU floor, " + std::to_string(iou_fake));
    return params;
}

}  // namespace jeca
