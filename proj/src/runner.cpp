#include "jeca/runner.hpp"

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

namespace jeca {

std::string records_path(const BatchOptions& opt) {
    return opt.output_dir + "/records_" + opt.method + ".jsonl";
}

std::vector<BatchItem> load_test_fakes(const std::string& dataset_dir, int limit) {
    DatasetManifest manifest = read_manifest(dataset_dir);
    std::vector<BatchItem> items;
    for (const DatasetItem& it : manifest.items) {
        if (it.split != "test" || it.kind == "real") continue;
        if (limit >= 0 && static_cast<int>(items.size()) >= limit) break;
        BatchItem b;
        b.id = it.id;
        b.image = load_image(dataset_dir + "/fake/" + it.id + ".png");
        b.gt_mask = load_mask(dataset_dir + "/masks/" + it.id + ".png");
        items.push_back(std::move(b));
    }
    if (items.empty()) throw std::runtime_error("runner: no test fakes in " + dataset_dir);
    return items;
}

RecordFile run_attack_batch(const DetectorInterface& det, const BatchOptions& opt, std::ostream* progress,
                            const BatchObserver& observer) {
    validate(opt.attack);
    AttackMethod method = attack_method_from_string(opt.method);
    std::vector<BatchItem> items = load_test_fakes(opt.dataset_dir, opt.limit);

    std::filesystem::create_directories(opt.output_dir);
    std::vector<AttackOutcome> outcomes(items.size());
    std::atomic<size_t> next{0};
    std::atomic<size_t> done{0};

    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            const BatchItem& item = items[i];
            AttackInputs in;
            in.image = &item.image;
            in.metrics_mask = &item.gt_mask;
            if (opt.attack.mask_mode == MaskMode::oracle) in.oracle_mask = &item.gt_mask;
            in.image_id = item.id;
            IterationObserver iter_obs;
            if (observer.on_iteration && static_cast<int>(i) < observer.observe_first)
                iter_obs = [&observer, i](const AttackState& st) {
                    observer.on_iteration(static_cast<int>(i), st);
                };
            outcomes[i] = run_method(method, det, in, opt.attack, iter_obs);
            size_t d = done.fetch_add(1) + 1;
            if (progress && (d % 10 == 0 || d == items.size()))
                (*progress) << "  attacked " << d << "/" << items.size() << "\r" << std::flush;
        }
    };

    int workers = std::max(1, opt.workers);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (progress) (*progress) << "\n";

    RecordFile out;
    out.header.method = opt.method;
    out.header.threat_level = to_string(opt.attack.threat_level);
    out.header.mask_mode = to_string(opt.attack.mask_mode);
    out.header.seed = opt.attack.seed;
    out.header.epsilon = opt.attack.epsilon;
    for (auto& oc : outcomes) out.records.push_back(std::move(oc.record));
    write_records(records_path(opt), out.header, out.records);

    if (opt.save_adversarial) {
        std::filesystem::create_directories(opt.output_dir + "/adversarial");
        for (size_t i = 0; i < items.size(); ++i) {
            save_image(opt.output_dir + "/adversarial/" + items[i].id + ".png", outcomes[i].adversarial);
            Perturbation delta(items[i].image.height, items[i].image.width, opt.attack.epsilon);
            for (size_t j = 0; j < delta.v.size(); ++j)
                delta.v[j] = outcomes[i].adversarial.v[j] - items[i].image.v[j];
            save_delta(opt.output_dir + "/adversarial/" + items[i].id + ".delta", delta);
        }
    }
    return out;
}

double unflagged_fraction(const RecordFile& file) {
    if (file.records.empty()) return 0.0;
    int clean = 0;
    for (const auto& r : file.records) clean += r.flagged() ? 0 : 1;
    return static_cast<double>(clean) / static_cast<double>(file.records.size());
}

void save_delta(const std::string& path, const Perturbation& delta) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("delta: cannot write " + path);
    f.write("J2DL", 4);
    uint32_t dims[2] = {static_cast<uint32_t>(delta.height), static_cast<uint32_t>(delta.width)};
    f.write(reinterpret_cast<const char*>(dims), 8);
    f.write(reinterpret_cast<const char*>(&delta.epsilon), 8);
    f.write(reinterpret_cast<const char*>(delta.v.data()),
            static_cast<std::streamsize>(delta.v.size() * 8));
}

Perturbation load_delta(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("delta: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "J2DL", 4) != 0) throw std::runtime_error("delta: bad magic");
    uint32_t dims[2];
    f.read(reinterpret_cast<char*>(dims), 8);
    Perturbation d(static_cast<int>(dims[0]), static_cast<int>(dims[1]), 0.0);
    f.read(reinterpret_cast<char*>(&d.epsilon), 8);
    f.read(reinterpret_cast<char*>(d.v.data()), static_cast<std::streamsize>(d.v.size() * 8));
    if (!f) throw std::runtime_error("delta: truncated file " + path);
    return d;
}

}  // namespace jeca
