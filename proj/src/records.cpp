#include "ul2r/records.hpp"

#include <sstream>

#include <json.hpp>

#include "ul2r/config.hpp"
#include "ul2r/errors.hpp"

namespace ul2r {

using ordered_json = nlohmann::ordered_json;

std::string example_to_json(const CorruptedExample& ex) {
    ordered_json j;
    j["mode"] = ex.mode ? ordered_json(*ex.mode) : ordered_json(nullptr);
    j["inputs"] = ex.inputs;
    j["targets"] = ex.targets;
    j["original_len"] = ex.original_len;
    return j.dump();
}

CorruptedExample example_from_json(const std::string& line) {
    try {
        const ordered_json j = ordered_json::parse(line);
        CorruptedExample ex;
        if (!j.at("mode").is_null()) ex.mode = j.at("mode").get<TokenId>();
        ex.inputs = j.at("inputs").get<TokenSeq>();
        ex.targets = j.at("targets").get<TokenSeq>();
        ex.original_len = j.at("original_len").get<std::size_t>();
        return ex;
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::malformed_example, std::string("bad example record: ") + e.what());
    }
}

std::vector<std::string> packed_rows_to_json(const PackedBatch& batch) {
    std::vector<std::string> out;
    for (std::size_t r = 0; r < batch.row_count(); ++r) {
        ordered_json j;
        j["tokens"] = batch.rows[r];
        j["loss_mask"] = batch.loss_mask[r];
        ordered_json bounds = ordered_json::array();
        for (const Segment& s : batch.segments[r]) bounds.push_back({s.start, s.end, s.prefix_len});
        j["segment_bounds"] = std::move(bounds);
        j["pad_count"] = batch.pad_counts[r];
        out.push_back(j.dump());
    }
    return out;
}

std::string metric_to_csv(const MetricRecord& rec) {
    std::ostringstream os;
    os << rec.step << ',' << phase_name(rec.phase) << ',' << format_double(rec.lr) << ',' << format_double(rec.loss)
       << ',' << rec.tokens << ',' << format_double(rec.flops);
    return os.str();
}

std::vector<MetricRecord> read_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw Error(ErrorCode::config, "metrics CSV must start with header '" + std::string(kMetricsHeader) + "'");
    }
    std::vector<MetricRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw Error(ErrorCode::config, "bad metrics row: " + line);
        MetricRecord rec;
        rec.step = static_cast<std::size_t>(parse_int(cells[0]));
        rec.phase = parse_phase(cells[1]);
        rec.lr = parse_double(cells[2]);
        rec.loss = parse_double(cells[3]);
        rec.tokens = static_cast<std::uint64_t>(parse_int(cells[4]));
        rec.flops = parse_double(cells[5]);
        out.push_back(rec);
    }
    return out;
}

} // namespace ul2r
