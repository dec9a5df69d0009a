#include "checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace privit::vit {

namespace {

constexpr uint32_t k_version = 1;

struct FileCloser {
    void operator()(std::FILE * f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::vector<uint8_t> & out, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
}

void put_f64(std::vector<uint8_t> & out, double d) {
    const uint64_t v = std::bit_cast<uint64_t>(d);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
}

class Reader {
  public:
    Reader(const uint8_t * data, size_t len, std::string path)
        : data_(data), len_(len), path_(std::move(path)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(data_[at_ + static_cast<size_t>(i)]) << (8 * i);
        }
        at_ += 4;
        return v;
    }

    uint8_t u8() {
        need(1);
        return data_[at_++];
    }

    double f64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<uint64_t>(data_[at_ + static_cast<size_t>(i)]) << (8 * i);
        }
        at_ += 8;
        return std::bit_cast<double>(v);
    }

    void f64_array(std::vector<double> & dst, size_t n) {
        dst.resize(n);
        for (size_t i = 0; i < n; ++i) {
            dst[i] = f64();
        }
    }

    bool exhausted() const { return at_ == len_; }

  private:
    void need(size_t n) {
        if (at_ + n > len_) {
            throw std::runtime_error("checkpoint '" + path_ + "' truncated");
        }
    }

    const uint8_t * data_;
    size_t          len_;
    size_t          at_ = 0;
    std::string     path_;
};

}  // namespace

void save_checkpoint(const Model & m, const std::string & path) {
    std::vector<uint8_t> buf;
    buf.push_back('P');
    buf.push_back('V');
    buf.push_back('I');
    buf.push_back('T');
    put_u32(buf, k_version);
    const ModelConfig & c = m.cfg;
    for (int v : {c.num_layers, c.embed_dim, c.mlp_dim, c.num_heads, c.image_size, c.patch_size,
                  c.num_classes, c.channels, static_cast<int>(c.gelu_granularity),
                  static_cast<int>(c.taylor_variant)}) {
        put_u32(buf, static_cast<uint32_t>(v));
    }
    put_f64(buf, m.switches.epsilon);
    buf.push_back(m.switches.c_frozen ? 1 : 0);
    buf.push_back(m.switches.s_frozen ? 1 : 0);

    auto & params = const_cast<ModelParams &>(m.params);  // named_params wants mutable access
    for (const NamedArray & arr : named_params(params)) {
        for (double d : *arr.data) {
            put_f64(buf, d);
        }
    }
    for (double d : m.switches.c) {
        put_f64(buf, d);
    }
    for (double d : m.switches.s) {
        put_f64(buf, d);
    }

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) {
        throw std::runtime_error("short write to '" + path + "'");
    }
}

Model load_checkpoint(const std::string & path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) {
        throw std::runtime_error("cannot open checkpoint '" + path + "'");
    }
    std::vector<uint8_t> buf;
    uint8_t chunk[65536];
    size_t  got = 0;
    while ((got = std::fread(chunk, 1, sizeof(chunk), f.get())) > 0) {
        buf.insert(buf.end(), chunk, chunk + got);
    }
    if (buf.size() < 8 || buf[0] != 'P' || buf[1] != 'V' || buf[2] != 'I' || buf[3] != 'T') {
        throw std::runtime_error("'" + path + "' is not a PVIT checkpoint");
    }
    Reader r(buf.data() + 4, buf.size() - 4, path);
    const uint32_t version = r.u32();
    if (version != k_version) {
        throw std::runtime_error("checkpoint '" + path + "' has unsupported version " +
                                 std::to_string(version));
    }

    Model m;
    ModelConfig & c = m.cfg;
    c.num_layers  = static_cast<int>(r.u32());
    c.embed_dim   = static_cast<int>(r.u32());
    c.mlp_dim     = static_cast<int>(r.u32());
    c.num_heads   = static_cast<int>(r.u32());
    c.image_size  = static_cast<int>(r.u32());
    c.patch_size  = static_cast<int>(r.u32());
    c.num_classes = static_cast<int>(r.u32());
    c.channels    = static_cast<int>(r.u32());
    c.gelu_granularity = static_cast<GeluGranularity>(r.u32());
    c.taylor_variant   = static_cast<AttnVariant>(r.u32());
    c.validate();

    m.switches.epsilon  = r.f64();
    m.switches.c_frozen = r.u8() != 0;
    m.switches.s_frozen = r.u8() != 0;

    // allocate to config shapes, then overwrite
    Rng dummy(0);
    m.params = ModelParams::init(c, dummy);
    for (const NamedArray & arr : named_params(m.params)) {
        r.f64_array(*arr.data, arr.data->size());
    }
    r.f64_array(m.switches.c, static_cast<size_t>(c.gelu_switch_count()));
    r.f64_array(m.switches.s, static_cast<size_t>(c.softmax_switch_count()));
    if (!r.exhausted()) {
        throw std::runtime_error("checkpoint '" + path + "' has trailing bytes");
    }
    return m;
}

}  // namespace privit::vit
