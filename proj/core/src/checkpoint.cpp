#include "mdlm/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mdlm {

namespace {

constexpr char kMagic[4]    = {'M', 'D', 'L', 'M'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string & out, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string & out, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f32(std::string & out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string & buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) {
            throw std::runtime_error("checkpoint: truncated payload");
        }
    }

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 8;
        return v;
    }

    float f32() {
        uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
};

void append_tensors(std::string & out, PredictorParamsT<float> & p) {
    for (auto & e : tensor_entries(p)) {
        for (float w : e.mat->v) {
            put_f32(out, w);
        }
    }
}

void read_tensors(Reader & r, PredictorParamsT<float> & p) {
    for (auto & e : tensor_entries(p)) {
        for (float & w : e.mat->v) {
            w = r.f32();
        }
    }
}

}  // namespace

void save_checkpoint(const std::string & path, const PredictorParams & params,
                     const OptimizerState & opt, uint64_t seed) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    const Dims & dm = params.dims;
    put_u32(out, static_cast<uint32_t>(dm.vocab_size));
    put_u32(out, static_cast<uint32_t>(dm.feature_dim));
    put_u32(out, static_cast<uint32_t>(dm.d_model));
    put_u32(out, static_cast<uint32_t>(dm.d_ff));
    put_u32(out, static_cast<uint32_t>(dm.n_layers));
    put_u32(out, static_cast<uint32_t>(dm.n_heads));
    put_u32(out, static_cast<uint32_t>(dm.max_len));
    put_u32(out, static_cast<uint32_t>(dm.proj_hidden));
    put_u64(out, seed);
    put_u64(out, opt.step);

    append_tensors(out, const_cast<PredictorParams &>(params));
    append_tensors(out, const_cast<PredictorParamsT<float> &>(opt.m));
    append_tensors(out, const_cast<PredictorParamsT<float> &>(opt.v));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw std::runtime_error("checkpoint: cannot open '" + tmp + "' for writing");
        }
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) {
            throw std::runtime_error("checkpoint: write failed for '" + tmp + "'");
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("checkpoint: cannot rename '" + tmp + "' to '" + path + "'");
    }
}

Checkpoint load_checkpoint(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    }
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: corrupt header (bad magic)");
    }
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: version mismatch (got " + std::to_string(version) +
                                 ", expected " + std::to_string(kVersion) + ")");
    }
    Dims dm;
    dm.vocab_size  = static_cast<int>(r.u32());
    dm.feature_dim = static_cast<int>(r.u32());
    dm.d_model     = static_cast<int>(r.u32());
    dm.d_ff        = static_cast<int>(r.u32());
    dm.n_layers    = static_cast<int>(r.u32());
    dm.n_heads     = static_cast<int>(r.u32());
    dm.max_len     = static_cast<int>(r.u32());
    dm.proj_hidden = static_cast<int>(r.u32());
    try {
        dm.validate();
    } catch (const std::exception & e) {
        throw std::runtime_error(std::string("checkpoint: corrupt header (") + e.what() + ")");
    }

    Checkpoint ckpt;
    ckpt.seed     = r.u64();
    ckpt.params   = PredictorParams::shaped(dm);
    ckpt.opt      = OptimizerState::shaped(dm);
    ckpt.opt.step = r.u64();

    read_tensors(r, ckpt.params);
    read_tensors(r, ckpt.opt.m);
    read_tensors(r, ckpt.opt.v);

    if (r.pos != buf.size()) {
        throw std::runtime_error("checkpoint: trailing bytes after payload");
    }
    return ckpt;
}

}  // namespace mdlm
