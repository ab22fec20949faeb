#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jeca/core.hpp"
#include "jeca/losses.hpp"

namespace jeca {

struct TraceEntry {
    int t = 0;
    LossBreakdown losses;
    double ads = 0.0;
};

// Per-image attack result; the substrate every metric is computed from.
struct AttackRecord {
    std::string image_id;
    Label clean_prediction = Label::Real;
    Label attacked_prediction = Label::Real;
    bool success = false;  // clean == Fake && attacked == Real
    double iou_clean = 0.0;
    double iou_adv = 0.0;
    double ads_clean = 0.0;
    double ads_adv = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::vector<double> loss_trace;  // l_vis per iteration
    std::optional<std::string> explanation;
    std::optional<double> jec_score;  // 1..5 when scored
    std::vector<std::string> flags;   // "aborted", "degraded_mask", "decoy_fallback:*"
    std::vector<TraceEntry> trace;    // full per-iteration breakdown when tracing is on

    bool flagged() const { return !flags.empty(); }
    bool recompute_success() const {
        return clean_prediction == Label::Fake && attacked_prediction == Label::Real;
    }
};

void validate(const AttackRecord& r);

struct RecordFileHeader {
    std::string schema = "jeca2.attack-record";
    int version = 1;
    std::string method;
    std::string threat_level;
    std::string mask_mode;
    uint64_t seed = 0;
    double epsilon = 0.0;
};

// Line-delimited records with a versioned header line. Field order and float
// formatting are fixed so identical runs produce byte-identical files.
void write_records(const std::string& path, const RecordFileHeader& header,
                   const std::vector<AttackRecord>& records);

struct RecordFile {
    RecordFileHeader header;
    std::vector<AttackRecord> records;
};
RecordFile read_records(const std::string& path);

// %.17g, guaranteed finite; shared by every serializer in the project.
std::string format_double(double x);

}  // namespace jeca
