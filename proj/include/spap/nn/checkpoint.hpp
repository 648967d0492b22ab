#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include "spap/tensor.hpp"

namespace spap::nn {

/// Named arrays keyed by layer path (e.g. "deconv1.weight", "spap0.gamma").
///
/// On-disk text format, one entry per line after a magic header:
///
///     spap-checkpoint 1
///     <key> <rank> <d0> ... <dn> : <v0> <v1> ...
///
/// Values use shortest round-trip decimal, so save/load is bit-exact and the
/// file is byte-identical for identical contents. Keys are written sorted.
class Checkpoint {
   public:
    void put(const std::string& key, const Tensor& t) { entries_[key] = t.clone(); }

    bool contains(const std::string& key) const { return entries_.count(key) > 0; }

    const Tensor& at(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw std::runtime_error("checkpoint: missing entry '" + key + "'");
        return it->second;
    }

    const std::map<std::string, Tensor>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::string serialize() const {
        std::string out = "spap-checkpoint 1\n";
        char buf[64];
        for (const auto& [key, t] : entries_) {
            out += key;
            out += ' ';
            out += std::to_string(t.rank());
            for (auto d : t.shape()) {
                out += ' ';
                out += std::to_string(d);
            }
            out += " :";
            for (double v : t.values()) {
                auto res = std::to_chars(buf, buf + sizeof(buf), v);
                out += ' ';
                out.append(buf, res.ptr);
            }
            out += '\n';
        }
        return out;
    }

    static Checkpoint parse(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line) || line != "spap-checkpoint 1") {
            throw std::runtime_error("checkpoint: bad header");
        }
        Checkpoint ck;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string key, colon;
            std::size_t rank = 0;
            if (!(ls >> key >> rank) || rank == 0) throw bad_line(lineno);
            Shape shape(rank);
            for (auto& d : shape) {
                if (!(ls >> d) || d == 0) throw bad_line(lineno);
            }
            if (!(ls >> colon) || colon != ":") throw bad_line(lineno);
            std::vector<double> values;
            values.reserve(shape_numel(shape));
            std::string tok;
            while (ls >> tok) {
                double v = 0.0;
                auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) throw bad_line(lineno);
                values.push_back(v);
            }
            if (values.size() != shape_numel(shape)) throw bad_line(lineno);
            ck.entries_[key] = Tensor(shape, std::move(values));
        }
        return ck;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
        f << serialize();
        if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

   private:
    static std::runtime_error bad_line(std::size_t lineno) {
        return std::runtime_error("checkpoint: malformed entry at line " + std::to_string(lineno));
    }

    std::map<std::string, Tensor> entries_;
};

}  // namespace spap::nn
