#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "speclab/metrics.hpp"

namespace speclab {

// Input-format violation; the message always names the offending line.
struct ParseError : std::runtime_error {
    std::size_t line;
    ParseError(std::size_t line_no, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

namespace detail {

inline bool blank(const std::string& s) {
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

inline std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return in;
}

}  // namespace detail

// One JSON object per line: {"id": string, "length": integer, "vector": [numbers]}.
// The first record fixes the dimension; any later mismatch aborts with the
// offending record's id.
inline std::vector<EmbeddingRecord> read_embeddings(std::istream& in) {
    std::vector<EmbeddingRecord> records;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("length") ||
            !obj.contains("vector"))
            throw ParseError(line_no, "expected an object with id, length and vector");
        if (!obj["id"].is_string()) throw ParseError(line_no, "id must be a string");
        if (!obj["length"].is_number_integer() || obj["length"].get<long long>() < 1)
            throw ParseError(line_no, "length must be a positive integer");
        if (!obj["vector"].is_array() || obj["vector"].empty())
            throw ParseError(line_no, "vector must be a nonempty array");
        EmbeddingRecord rec;
        rec.id = obj["id"].get<std::string>();
        rec.length = obj["length"].get<std::size_t>();
        for (const auto& v : obj["vector"]) {
            if (!v.is_number()) throw ParseError(line_no, "vector entries must be numbers");
            rec.vector.push_back(v.get<double>());
        }
        if (dim == 0)
            dim = rec.vector.size();
        else if (rec.vector.size() != dim)
            throw ParseError(line_no, "record '" + rec.id + "': dimension " +
                                          std::to_string(rec.vector.size()) +
                                          " does not match first record's " + std::to_string(dim));
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<EmbeddingRecord> read_embeddings_file(const std::string& path) {
    auto in = detail::open_or_throw(path);
    return read_embeddings(in);
}

// Run lines: "qid Q0 docid rank score tag". Entries are re-sorted by rank per
// query; duplicate or non-positive ranks surface via RankingRun::validate.
inline void read_run(std::istream& in, RankingRun& run) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        std::istringstream fields(line);
        std::string qid, q0, docid, tag;
        long long rank = 0;
        double score = 0.0;
        if (!(fields >> qid >> q0 >> docid >> rank >> score >> tag))
            throw ParseError(line_no, "expected 'qid Q0 docid rank score tag'");
        if (rank < 1) throw ParseError(line_no, "rank must be >= 1");
        run.runs[qid].push_back({docid, static_cast<std::size_t>(rank), score});
    }
    for (auto& [qid, docs] : run.runs) {
        (void)qid;
        std::sort(docs.begin(), docs.end(),
                  [](const RankedDoc& a, const RankedDoc& b) { return a.rank < b.rank; });
    }
}

// Qrels lines: "qid 0 docid rel"; rel > 0 marks the doc relevant for the query.
inline void read_qrels(std::istream& in, RankingRun& run) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        std::istringstream fields(line);
        std::string qid, zero, docid;
        long long rel = 0;
        if (!(fields >> qid >> zero >> docid >> rel))
            throw ParseError(line_no, "expected 'qid 0 docid rel'");
        if (rel > 0) run.qrels[qid].insert(docid);
    }
}

// Two-column "docid length" lines; a doc may appear once.
inline void read_doc_lengths(std::istream& in, RankingRun& run) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        std::istringstream fields(line);
        std::string docid;
        long long length = 0;
        if (!(fields >> docid >> length))
            throw ParseError(line_no, "expected 'docid length'");
        if (length < 1) throw ParseError(line_no, "length must be >= 1");
        if (!run.doc_lengths.emplace(docid, static_cast<std::size_t>(length)).second)
            throw ParseError(line_no, "duplicate length entry for doc '" + docid + "'");
    }
}

inline RankingRun read_ranking_inputs(const std::string& run_path, const std::string& qrels_path,
                                      const std::string& lengths_path) {
    RankingRun run;
    {
        auto in = detail::open_or_throw(run_path);
        read_run(in, run);
    }
    {
        auto in = detail::open_or_throw(qrels_path);
        read_qrels(in, run);
    }
    {
        auto in = detail::open_or_throw(lengths_path);
        read_doc_lengths(in, run);
    }
    return run;
}

}  // namespace speclab
