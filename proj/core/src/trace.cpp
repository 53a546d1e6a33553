#include "mdlm/trace.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mdlm {

int GenerationTrace::total_unmasked() const {
    int n = 0;
    for (const auto & e : entries) {
        n += static_cast<int>(e.positions.size());
    }
    return n;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string & s, const char * what) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception &) {
        throw std::runtime_error(std::string("trace: bad ") + what + " value '" + s + "'");
    }
}

int64_t parse_i64(const std::string & s, const char * what) {
    int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::runtime_error(std::string("trace: bad ") + what + " value '" + s + "'");
    }
    return v;
}

// splits "key=value" and returns value for an expected key
std::string expect_kv(const std::string & token, const char * key) {
    auto eq = token.find('=');
    if (eq == std::string::npos || token.substr(0, eq) != key) {
        throw std::runtime_error("trace: expected '" + std::string(key) + "=...', got '" + token +
                                 "'");
    }
    return token.substr(eq + 1);
}

}  // namespace

void write_trace(std::ostream & os, const GenerationTrace & trace) {
    os << "# mdlm-trace v1\n";
    os << "# L=" << trace.gen_length << " B=" << trace.block_length << " Z=" << trace.steps << "\n";
    os << "# total_seconds=" << fmt_double(trace.total_seconds) << "\n";
    os << "# emitted_tokens=" << trace.emitted_tokens << "\n";
    for (const auto & e : trace.entries) {
        os << "step=" << e.step << " block=" << e.block << " t=" << fmt_double(e.t)
           << " s=" << fmt_double(e.s) << " latency_us=" << e.latency_us << " unmasked=";
        for (size_t i = 0; i < e.positions.size(); ++i) {
            if (i > 0) {
                os << ",";
            }
            os << e.positions[i] << ":" << fmt_double(e.confidences[i]);
        }
        os << "\n";
    }
}

std::string serialize_trace(const GenerationTrace & trace) {
    std::ostringstream os;
    write_trace(os, trace);
    return os.str();
}

GenerationTrace parse_trace(std::istream & is) {
    GenerationTrace trace;
    std::string line;
    bool saw_magic = false;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string tok;
            while (ls >> tok) {
                auto eq = tok.find('=');
                if (eq == std::string::npos) {
                    if (tok == "mdlm-trace") {
                        saw_magic = true;
                    }
                    continue;
                }
                std::string key = tok.substr(0, eq);
                std::string val = tok.substr(eq + 1);
                if (key == "L") {
                    trace.gen_length = static_cast<int>(parse_i64(val, "L"));
                } else if (key == "B") {
                    trace.block_length = static_cast<int>(parse_i64(val, "B"));
                } else if (key == "Z") {
                    trace.steps = static_cast<int>(parse_i64(val, "Z"));
                } else if (key == "total_seconds") {
                    trace.total_seconds = parse_double(val, "total_seconds");
                } else if (key == "emitted_tokens") {
                    trace.emitted_tokens = static_cast<int>(parse_i64(val, "emitted_tokens"));
                }
            }
            continue;
        }
        std::istringstream ls(line);
        std::string tok;
        TraceStep e;
        ls >> tok;
        e.step = static_cast<int>(parse_i64(expect_kv(tok, "step"), "step"));
        ls >> tok;
        e.block = static_cast<int>(parse_i64(expect_kv(tok, "block"), "block"));
        ls >> tok;
        e.t = parse_double(expect_kv(tok, "t"), "t");
        ls >> tok;
        e.s = parse_double(expect_kv(tok, "s"), "s");
        ls >> tok;
        e.latency_us = parse_i64(expect_kv(tok, "latency_us"), "latency_us");
        ls >> tok;
        std::string list = expect_kv(tok, "unmasked");
        if (!list.empty()) {
            std::istringstream items(list);
            std::string item;
            while (std::getline(items, item, ',')) {
                auto colon = item.find(':');
                if (colon == std::string::npos) {
                    throw std::runtime_error("trace: bad unmasked item '" + item + "'");
                }
                e.positions.push_back(
                    static_cast<int>(parse_i64(item.substr(0, colon), "position")));
                e.confidences.push_back(parse_double(item.substr(colon + 1), "confidence"));
            }
        }
        trace.entries.push_back(std::move(e));
    }
    if (!saw_magic) {
        throw std::runtime_error("trace: missing '# mdlm-trace v1' header");
    }
    return trace;
}

GenerationTrace parse_trace_string(const std::string & text) {
    std::istringstream is(text);
    return parse_trace(is);
}

}  // namespace mdlm
