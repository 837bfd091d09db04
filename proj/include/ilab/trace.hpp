#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ilab/support.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// Trace model: one event per retired instruction, with an optional data-side
// memory access. Basic-block ids are carried explicitly; there is no ISA
// decoding anywhere in the toolkit.
// ---------------------------------------------------------------------------

struct mem_access {
    uint64_t addr = 0;
    bool is_store = false;

    bool operator==(const mem_access&) const = default;
};

struct trace_event {
    uint64_t pc = 0;
    uint32_t bb_id = 0;
    std::optional<mem_access> mem;

    bool operator==(const trace_event&) const = default;
};

struct trace_meta {
    std::string name;
    std::string input_label;
    uint64_t event_count = 0;
    uint32_t bb_count = 0;
};

inline trace_meta make_meta(std::string name, std::string input_label,
                            std::span<const trace_event> events) {
    std::unordered_set<uint32_t> bbs;
    for (const auto& e : events) bbs.insert(e.bb_id);
    return trace_meta{std::move(name), std::move(input_label), events.size(),
                      static_cast<uint32_t>(bbs.size())};
}

// ---------------------------------------------------------------------------
// Chunking: fixed-size tiling of the instruction stream. The final chunk may
// be shorter; it is kept, not dropped, so the chunks always cover the trace.
// ---------------------------------------------------------------------------

struct chunk_span {
    uint64_t start = 0;
    uint64_t length = 0;

    bool operator==(const chunk_span&) const = default;
};

struct chunk_index {
    uint64_t chunk_size = 0;
    std::vector<chunk_span> boundaries;
};

inline chunk_index slice_chunks(const trace_meta& meta, uint64_t chunk_size) {
    if (chunk_size == 0) throw config_error("slice_chunks: chunk_size must be >= 1");
    chunk_index idx;
    idx.chunk_size = chunk_size;
    for (uint64_t start = 0; start < meta.event_count; start += chunk_size) {
        uint64_t len = std::min(chunk_size, meta.event_count - start);
        idx.boundaries.push_back({start, len});
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Binary trace format "CTR1", all little-endian:
//   header (16 bytes): magic "CTR1" | version u16 = 1 | flags u16 = 0 |
//                      event_count u64
//   record: pc u64 | bb_id u32 | flags u8 (bit0 has-mem, bit1 is-store) |
//           addr u64 iff has-mem
// A JSON sidecar `<trace>.meta.json` carries name / input_label / counts.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kTraceMagic[4] = {'C', 'T', 'R', '1'};
constexpr uint16_t kTraceVersion = 1;
constexpr uint8_t kHasMemBit = 0x01;
constexpr uint8_t kIsStoreBit = 0x02;

inline void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t get_le(const unsigned char* p, int n) {
    uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::filesystem::path meta_sidecar_path(const std::filesystem::path& trace_path) {
    std::filesystem::path p = trace_path;
    p += ".meta.json";
    return p;
}

inline void write_meta_sidecar(const trace_meta& meta, const std::filesystem::path& trace_path) {
    nlohmann::json j = {{"name", meta.name},
                        {"input_label", meta.input_label},
                        {"event_count", meta.event_count},
                        {"bb_count", meta.bb_count}};
    std::ofstream out(meta_sidecar_path(trace_path));
    if (!out) throw data_error("cannot write meta sidecar for " + trace_path.string());
    out << j.dump(2) << "\n";
}

inline void write_trace(std::span<const trace_event> events, const trace_meta& meta,
                        const std::filesystem::path& path) {
    if (meta.event_count != events.size())
        throw config_error("write_trace: meta.event_count " + std::to_string(meta.event_count) +
                           " != event list size " + std::to_string(events.size()));

    std::string buf;
    buf.reserve(16 + events.size() * 21);
    buf.append(detail::kTraceMagic, 4);
    detail::put_u16(buf, detail::kTraceVersion);
    detail::put_u16(buf, 0);
    detail::put_u64(buf, events.size());
    for (const auto& e : events) {
        detail::put_u64(buf, e.pc);
        detail::put_u32(buf, e.bb_id);
        uint8_t flags = 0;
        if (e.mem) {
            flags |= detail::kHasMemBit;
            if (e.mem->is_store) flags |= detail::kIsStoreBit;
        }
        buf.push_back(static_cast<char>(flags));
        if (e.mem) detail::put_u64(buf, e.mem->addr);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw data_error("short write to " + path.string());
    write_meta_sidecar(meta, path);
}

// Streaming reader: the header is parsed up front, events are decoded one at
// a time so a trace never has to fit in memory.
class trace_reader {
public:
    explicit trace_reader(const std::filesystem::path& path)
        : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) throw data_error("cannot open trace file " + path_);

        unsigned char header[16];
        in_.read(reinterpret_cast<char*>(header), 16);
        if (in_.gcount() != 16)
            throw truncated_record_error(path_ + ": truncated header", 0);
        if (std::memcmp(header, detail::kTraceMagic, 4) != 0)
            throw bad_magic_error(path_ + ": not a CTR1 trace (bad magic)");
        uint16_t version = static_cast<uint16_t>(detail::get_le(header + 4, 2));
        if (version != detail::kTraceVersion)
            throw version_mismatch_error(path_ + ": unsupported trace version " +
                                         std::to_string(version));
        meta_.event_count = detail::get_le(header + 8, 8);
        offset_ = 16;

        std::filesystem::path sidecar = meta_sidecar_path(path);
        if (std::filesystem::exists(sidecar)) {
            std::ifstream ms(sidecar);
            nlohmann::json j;
            try {
                ms >> j;
            } catch (const nlohmann::json::exception& e) {
                throw data_error(sidecar.string() + ": bad meta sidecar: " + e.what());
            }
            meta_.name = j.value("name", "");
            meta_.input_label = j.value("input_label", "");
            meta_.bb_count = j.value("bb_count", 0u);
            uint64_t side_count = j.value("event_count", meta_.event_count);
            if (side_count != meta_.event_count)
                throw data_error(sidecar.string() + ": sidecar event_count " +
                                 std::to_string(side_count) + " disagrees with header " +
                                 std::to_string(meta_.event_count));
        } else {
            meta_.name = path.stem().string();
        }
    }

    const trace_meta& meta() const { return meta_; }

    std::optional<trace_event> next() {
        if (read_ == meta_.event_count) return std::nullopt;
        uint64_t record_offset = offset_;
        unsigned char fixed[13];
        in_.read(reinterpret_cast<char*>(fixed), 13);
        if (in_.gcount() != 13)
            throw truncated_record_error(path_ + ": truncated record " + std::to_string(read_),
                                         record_offset);
        trace_event e;
        e.pc = detail::get_le(fixed, 8);
        e.bb_id = static_cast<uint32_t>(detail::get_le(fixed + 8, 4));
        uint8_t flags = fixed[12];
        offset_ += 13;
        if (flags & detail::kHasMemBit) {
            unsigned char a[8];
            in_.read(reinterpret_cast<char*>(a), 8);
            if (in_.gcount() != 8)
                throw truncated_record_error(
                    path_ + ": truncated record " + std::to_string(read_), record_offset);
            e.mem = mem_access{detail::get_le(a, 8), (flags & detail::kIsStoreBit) != 0};
            offset_ += 8;
        }
        ++read_;
        return e;
    }

private:
    std::ifstream in_;
    std::string path_;
    trace_meta meta_;
    uint64_t read_ = 0;
    uint64_t offset_ = 0;
};

inline std::pair<trace_meta, std::vector<trace_event>> load_trace(
    const std::filesystem::path& path) {
    trace_reader reader(path);
    std::vector<trace_event> events;
    events.reserve(reader.meta().event_count);
    while (auto e = reader.next()) events.push_back(*e);
    trace_meta meta = reader.meta();
    if (meta.bb_count == 0 && !events.empty())
        meta = make_meta(meta.name, meta.input_label, events);
    return {meta, std::move(events)};
}

// ---------------------------------------------------------------------------
// Text mirror format, one event per line: `pc bb_id [L|S addr]`. Numbers are
// decimal or 0x-hex; `#` starts a comment. Meant for hand-written fixtures.
// ---------------------------------------------------------------------------

inline void write_trace_text(std::span<const trace_event> events, const trace_meta& meta,
                             const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open " + path.string() + " for writing");
    out << "# " << meta.name << " / " << meta.input_label << "\n";
    char line[96];
    for (const auto& e : events) {
        if (e.mem) {
            std::snprintf(line, sizeof(line), "0x%llx %u %c 0x%llx\n",
                          static_cast<unsigned long long>(e.pc), e.bb_id,
                          e.mem->is_store ? 'S' : 'L',
                          static_cast<unsigned long long>(e.mem->addr));
        } else {
            std::snprintf(line, sizeof(line), "0x%llx %u\n",
                          static_cast<unsigned long long>(e.pc), e.bb_id);
        }
        out << line;
    }
}

inline std::vector<trace_event> read_trace_text(std::istream& in, const std::string& origin) {
    std::vector<trace_event> events;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::vector<std::string> tok;
        size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            size_t j = i;
            while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
            if (j > i) tok.push_back(line.substr(i, j - i));
            i = j;
        }
        if (tok.empty()) continue;
        if (tok.size() != 2 && tok.size() != 4)
            throw data_error(origin + ":" + std::to_string(lineno) +
                             ": expected `pc bb_id [L|S addr]`");
        trace_event e;
        try {
            e.pc = std::stoull(tok[0], nullptr, 0);
            e.bb_id = static_cast<uint32_t>(std::stoul(tok[1], nullptr, 0));
            if (tok.size() == 4) {
                if (tok[2] != "L" && tok[2] != "S")
                    throw data_error(origin + ":" + std::to_string(lineno) +
                                     ": memory kind must be L or S");
                e.mem = mem_access{std::stoull(tok[3], nullptr, 0), tok[2] == "S"};
            }
        } catch (const std::invalid_argument&) {
            throw data_error(origin + ":" + std::to_string(lineno) + ": malformed number");
        } catch (const std::out_of_range&) {
            throw data_error(origin + ":" + std::to_string(lineno) + ": number out of range");
        }
        events.push_back(e);
    }
    return events;
}

inline std::pair<trace_meta, std::vector<trace_event>> load_trace_text(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path.string());
    auto events = read_trace_text(in, path.string());
    return {make_meta(path.stem().string(), "", events), std::move(events)};
}

// Cheap content fingerprint used for run-ledger keys.
inline uint64_t trace_fingerprint(std::span<const trace_event> events) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : events) {
        char buf[32];
        std::memcpy(buf, &e.pc, 8);
        std::memcpy(buf + 8, &e.bb_id, 4);
        uint64_t addr = e.mem ? e.mem->addr : 0;
        std::memcpy(buf + 12, &addr, 8);
        buf[20] = e.mem ? (e.mem->is_store ? 2 : 1) : 0;
        h = fnv1a64(std::string_view(buf, 21), h);
    }
    return h;
}

}  // namespace ilab
