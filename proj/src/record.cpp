#include "jeca/record.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace jeca {

namespace {

using nlohmann::json;

std::string escape_json(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

void append_losses(std::string& line, const LossBreakdown& l) {
    line += "{\"l_det\":" + format_double(l.l_det);
    line += ",\"l_mislead\":" + format_double(l.l_mislead);
    line += ",\"l_hide\":" + format_double(l.l_hide);
    line += ",\"l_att\":" + format_double(l.l_att);
    line += ",\"l_l2\":" + format_double(l.l_l2);
    line += ",\"l_vis\":" + format_double(l.l_vis);
    line += ",\"l_semantic_ce\":" + format_double(l.l_semantic_ce);
    line += ",\"l_coherence\":" + format_double(l.l_coherence);
    line += ",\"l_text\":" + format_double(l.l_text);
    line += "}";
}

LossBreakdown losses_from_json(const json& j) {
    LossBreakdown l;
    l.l_det = j.at("l_det").get<double>();
    l.l_mislead = j.at("l_mislead").get<double>();
    l.l_hide = j.at("l_hide").get<double>();
    l.l_att = j.at("l_att").get<double>();
    l.l_l2 = j.at("l_l2").get<double>();
    l.l_vis = j.at("l_vis").get<double>();
    l.l_semantic_ce = j.at("l_semantic_ce").get<double>();
    l.l_coherence = j.at("l_coherence").get<double>();
    l.l_text = j.at("l_text").get<double>();
    return l;
}

}  // namespace

std::string format_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("record: non-finite value in serialization");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void validate(const AttackRecord& r) {
    if (r.success != r.recompute_success())
        throw std::invalid_argument("record: success flag inconsistent with stored predictions");
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(r.iou_clean) || !in01(r.iou_adv)) throw std::invalid_argument("record: iou out of [0,1]");
    if (!in01(r.ads_clean) || !in01(r.ads_adv)) throw std::invalid_argument("record: ads out of [0,1]");
    if (r.jec_score && (*r.jec_score < 1.0 || *r.jec_score > 5.0))
        throw std::invalid_argument("record: jec score out of [1,5]");
}

void write_records(const std::string& path, const RecordFileHeader& header,
                   const std::vector<AttackRecord>& records) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("record: cannot write " + path);

    std::string h = "{\"schema\":\"" + escape_json(header.schema) + "\"";
    h += ",\"version\":" + std::to_string(header.version);
    h += ",\"method\":\"" + escape_json(header.method) + "\"";
    h += ",\"threat_level\":\"" + escape_json(header.threat_level) + "\"";
    h += ",\"mask_mode\":\"" + escape_json(header.mask_mode) + "\"";
    h += ",\"seed\":" + std::to_string(header.seed);
    h += ",\"epsilon\":" + format_double(header.epsilon);
    h += "}\n";
    f << h;

    for (const AttackRecord& r : records) {
        validate(r);
        std::string line = "{\"image_id\":\"" + escape_json(r.image_id) + "\"";
        line += ",\"clean_prediction\":\"";
        line += to_string(r.clean_prediction);
        line += "\",\"attacked_prediction\":\"";
        line += to_string(r.attacked_prediction);
        line += "\",\"success\":";
        line += r.success ? "true" : "false";
        line += ",\"iou_clean\":" + format_double(r.iou_clean);
        line += ",\"iou_adv\":" + format_double(r.iou_adv);
        line += ",\"ads_clean\":" + format_double(r.ads_clean);
        line += ",\"ads_adv\":" + format_double(r.ads_adv);
        line += ",\"psnr\":" + format_double(r.psnr);
        line += ",\"ssim\":" + format_double(r.ssim);
        line += ",\"loss_trace\":[";
        for (size_t i = 0; i < r.loss_trace.size(); ++i) {
            if (i) line += ",";
            line += format_double(r.loss_trace[i]);
        }
        line += "]";
        line += ",\"explanation\":";
        line += r.explanation ? "\"" + escape_json(*r.explanation) + "\"" : "null";
        line += ",\"jec_score\":";
        line += r.jec_score ? format_double(*r.jec_score) : "null";
        line += ",\"flags\":[";
        for (size_t i = 0; i < r.flags.size(); ++i) {
            if (i) line += ",";
            line += "\"" + escape_json(r.flags[i]) + "\"";
        }
        line += "]";
        line += ",\"trace\":[";
        for (size_t i = 0; i < r.trace.size(); ++i) {
            if (i) line += ",";
            line += "{\"t\":" + std::to_string(r.trace[i].t) + ",\"losses\":";
            append_losses(line, r.trace[i].losses);
            line += ",\"ads\":" + format_double(r.trace[i].ads) + "}";
        }
        line += "]}\n";
        f << line;
    }
    if (!f) throw std::runtime_error("record: short write to " + path);
}

RecordFile read_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("record: cannot open " + path);
    RecordFile out;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("record: missing header line in " + path);
    {
        json j = json::parse(line);
        out.header.schema = j.at("schema").get<std::string>();
        out.header.version = j.at("version").get<int>();
        if (out.header.schema != "jeca2.attack-record" || out.header.version != 1)
            throw std::runtime_error("record: unsupported schema/version in " + path);
        out.header.method = j.at("method").get<std::string>();
        out.header.threat_level = j.at("threat_level").get<std::string>();
        out.header.mask_mode = j.at("mask_mode").get<std::string>();
        out.header.seed = j.at("seed").get<uint64_t>();
        out.header.epsilon = j.at("epsilon").get<double>();
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        AttackRecord r;
        r.image_id = j.at("image_id").get<std::string>();
        r.clean_prediction = label_from_string(j.at("clean_prediction").get<std::string>());
        r.attacked_prediction = label_from_string(j.at("attacked_prediction").get<std::string>());
        r.success = j.at("success").get<bool>();
        r.iou_clean = j.at("iou_clean").get<double>();
        r.iou_adv = j.at("iou_adv").get<double>();
        r.ads_clean = j.at("ads_clean").get<double>();
        r.ads_adv = j.at("ads_adv").get<double>();
        r.psnr = j.at("psnr").get<double>();
        r.ssim = j.at("ssim").get<double>();
        r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
        if (!j.at("explanation").is_null()) r.explanation = j.at("explanation").get<std::string>();
        if (!j.at("jec_score").is_null()) r.jec_score = j.at("jec_score").get<double>();
        r.flags = j.at("flags").get<std::vector<std::string>>();
        for (const auto& te : j.at("trace")) {
            TraceEntry e;
            e.t = te.at("t").get<int>();
            e.losses = losses_from_json(te.at("losses"));
            e.ads = te.at("ads").get<double>();
            r.trace.push_back(std::move(e));
        }
        validate(r);
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace jeca
