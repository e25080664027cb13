#include "engae/model.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace engae {

std::string arch_name(Arch a) {
    switch (a) {
        case Arch::tcn_ae: return "tcn_ae";
        case Arch::lstm_ae: return "lstm_ae";
        case Arch::ff_ae: return "ff_ae";
        case Arch::tcn_bc: return "tcn_bc";
        case Arch::lstm_bc: return "lstm_bc";
        case Arch::ff_bc: return "ff_bc";
    }
    return "?";
}

Arch arch_from_name(const std::string& s) {
    if (s == "tcn_ae") return Arch::tcn_ae;
    if (s == "lstm_ae") return Arch::lstm_ae;
    if (s == "ff_ae") return Arch::ff_ae;
    if (s == "tcn_bc") return Arch::tcn_bc;
    if (s == "lstm_bc") return Arch::lstm_bc;
    if (s == "ff_bc") return Arch::ff_bc;
    throw ConfigError("unknown architecture: " + s);
}

bool arch_is_ae(Arch a) {
    return a == Arch::tcn_ae || a == Arch::lstm_ae || a == Arch::ff_ae;
}

void ModelConfig::validate() const {
    if (n < 1 || T < 1 || L < 1 || h < 1 || k < 1 || d < 1 || b < 1)
        throw ConfigError("ModelConfig: all dims must be >= 1");
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("ModelConfig: dropout p must be in [0, 1)");
    if (arch == Arch::tcn_ae && T % d != 0)
        throw ConfigError("ModelConfig: T=" + std::to_string(T) +
                          " must be divisible by pool factor d=" + std::to_string(d));
}

std::size_t receptive_field(const ModelConfig& cfg) {
    return 1 + 2 * (cfg.k - 1) * ((std::size_t{1} << cfg.L) - 1);
}

namespace {

void add_tcn(std::vector<std::unique_ptr<Layer>>& layers, std::size_t cin,
             const ModelConfig& cfg, Rng& init, std::uint64_t seed, std::size_t tag) {
    for (std::size_t lvl = 0; lvl < cfg.L; ++lvl) {
        std::size_t in_ch = (lvl == 0) ? cin : cfg.h;
        layers.push_back(std::make_unique<ResidualBlock>(
            in_ch, cfg.h, cfg.k, std::size_t{1} << lvl, cfg.p, init,
            Rng::derive_seed(seed, tag * 100 + lvl)));
    }
}

}  // namespace

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m(cfg);
    Rng init(Rng::derive_seed(seed, 0xeaae));
    auto& L = m.layers_;
    switch (cfg.arch) {
        case Arch::tcn_ae:
            add_tcn(L, cfg.n, cfg, init, seed, 1);
            L.push_back(std::make_unique<Dense>(cfg.h, cfg.n, init));  // Conv1
            L.push_back(std::make_unique<AvgPoolTime>(cfg.d));
            L.push_back(std::make_unique<UpsampleTime>(cfg.d, cfg.upsample));
            add_tcn(L, cfg.n, cfg, init, seed, 2);
            L.push_back(std::make_unique<Dense>(cfg.h, cfg.n, init));  // Conv2
            break;
        case Arch::lstm_ae:
            L.push_back(std::make_unique<Lstm>(cfg.n, cfg.h, init));
            L.push_back(std::make_unique<Lstm>(cfg.h, cfg.b, init));
            L.push_back(std::make_unique<Lstm>(cfg.b, cfg.h, init));
            L.push_back(std::make_unique<Lstm>(cfg.h, cfg.n, init));
            break;
        case Arch::ff_ae:
            if (!cfg.ff_per_frame) {
                L.push_back(std::make_unique<Flatten>());
                L.push_back(std::make_unique<Dense>(cfg.T * cfg.n, 2 * cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(2 * cfg.b, cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(cfg.b, 2 * cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(2 * cfg.b, cfg.T * cfg.n, init));
                L.push_back(std::make_unique<Unflatten>(cfg.T, cfg.n));
            } else {
                L.push_back(std::make_unique<Dense>(cfg.n, 2 * cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(2 * cfg.b, cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(cfg.b, 2 * cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(2 * cfg.b, cfg.n, init));
            }
            break;
        case Arch::tcn_bc:
            add_tcn(L, cfg.n, cfg, init, seed, 1);
            L.push_back(std::make_unique<LastTimeStep>());
            L.push_back(std::make_unique<Dense>(cfg.h, 1, init));
            L.push_back(std::make_unique<Sigmoid>());
            break;
        case Arch::lstm_bc:
            L.push_back(std::make_unique<Lstm>(cfg.n, cfg.h, init));
            L.push_back(std::make_unique<Lstm>(cfg.h, cfg.b, init));
            L.push_back(std::make_unique<LastTimeStep>());
            L.push_back(std::make_unique<Dense>(cfg.b, 1, init));
            L.push_back(std::make_unique<Sigmoid>());
            break;
        case Arch::ff_bc:
            if (!cfg.ff_per_frame) {
                L.push_back(std::make_unique<Flatten>());
                L.push_back(std::make_unique<Dense>(cfg.T * cfg.n, 2 * cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(2 * cfg.b, cfg.b, init));
                L.push_back(std::make_unique<Relu>());
            } else {
                L.push_back(std::make_unique<Dense>(cfg.n, 2 * cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<Dense>(2 * cfg.b, cfg.b, init));
                L.push_back(std::make_unique<Relu>());
                L.push_back(std::make_unique<LastTimeStep>());
            }
            L.push_back(std::make_unique<Dense>(cfg.b, 1, init));
            L.push_back(std::make_unique<Sigmoid>());
            break;
    }
    m.set_mode(Mode::train);
    return m;
}

void Model::set_mode(Mode m) {
    mode_ = m;
    for (auto& l : layers_) l->set_mode(m);
}

SeqTensor Model::forward_chain(const SeqTensor& x) {
    if (!x.all_finite()) throw InputError("model input contains non-finite values");
    SeqTensor h = x;
    for (auto& l : layers_) h = l->forward(h);
    forward_done_ = true;
    return h;
}

SeqTensor Model::forward_ae(const SeqTensor& x) {
    if (!arch_is_ae(cfg_.arch))
        throw ConfigError("forward_ae called on classifier architecture " + arch_name(cfg_.arch));
    if (x.cols() != cfg_.n)
        throw InputError("forward_ae: expected " + std::to_string(cfg_.n) +
                         " features, got " + std::to_string(x.cols()));
    if ((cfg_.arch == Arch::tcn_ae || (cfg_.arch == Arch::ff_ae && !cfg_.ff_per_frame)) &&
        x.rows() != cfg_.T)
        throw InputError("forward_ae: expected T=" + std::to_string(cfg_.T) +
                         " rows, got " + std::to_string(x.rows()));
    return forward_chain(x);
}

double Model::forward_bc(const SeqTensor& x) {
    if (arch_is_ae(cfg_.arch))
        throw ConfigError("forward_bc called on AE architecture " + arch_name(cfg_.arch));
    if (x.cols() != cfg_.n)
        throw InputError("forward_bc: expected " + std::to_string(cfg_.n) +
                         " features, got " + std::to_string(x.cols()));
    SeqTensor out = forward_chain(x);
    return out(0, 0);
}

void Model::backward(const SeqTensor& grad_out) {
    if (!forward_done_) throw InputError("backward called before forward");
    SeqTensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

void Model::backward_bc(double grad_prob) {
    SeqTensor g(1, 1);
    g(0, 0) = grad_prob;
    backward(g);
}

std::vector<Param*> Model::params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
        for (Param* p : l->params()) out.push_back(p);
    return out;
}

void Model::zero_grad() {
    for (Param* p : params()) p->zero_grad();
}

// ------------------------------------------------------------------ checkpoint
// Layout: magic "ENGAE", u32 version, u32 arch, u64 n,T,L,h,k,d,b, f64 p,
// u8 upsample mode, u8 ff_per_frame, u64 param count, then per parameter a
// u64 length and the raw little-endian 64-bit floats in declared layer order.

namespace {

constexpr char kMagic[5] = {'E', 'N', 'G', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("checkpoint: truncated stream");
    return v;
}

}  // namespace

void Model::save_checkpoint(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.arch));
    for (std::size_t v : {cfg_.n, cfg_.T, cfg_.L, cfg_.h, cfg_.k, cfg_.d, cfg_.b})
        put<std::uint64_t>(out, v);
    put<double>(out, cfg_.p);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg_.upsample));
    put<std::uint8_t>(out, cfg_.ff_per_frame ? 1 : 0);
    auto ps = const_cast<Model*>(this)->params();
    put<std::uint64_t>(out, ps.size());
    for (Param* p : ps) {
        put<std::uint64_t>(out, p->value.size());
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw FormatError("checkpoint: write failure");
}

void Model::save_checkpoint(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw FormatError("checkpoint: cannot open " + tmp);
        save_checkpoint(f);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw FormatError("checkpoint: cannot rename into place: " + path);
}

Model Model::load_checkpoint(std::istream& in) {
    char magic[5];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError("checkpoint: bad magic");
    std::uint32_t version = get<std::uint32_t>(in);
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    ModelConfig cfg;
    std::uint32_t arch = get<std::uint32_t>(in);
    if (arch > static_cast<std::uint32_t>(Arch::ff_bc))
        throw FormatError("checkpoint: unknown architecture tag");
    cfg.arch = static_cast<Arch>(arch);
    cfg.n = get<std::uint64_t>(in);
    cfg.T = get<std::uint64_t>(in);
    cfg.L = get<std::uint64_t>(in);
    cfg.h = get<std::uint64_t>(in);
    cfg.k = get<std::uint64_t>(in);
    cfg.d = get<std::uint64_t>(in);
    cfg.b = get<std::uint64_t>(in);
    cfg.p = get<double>(in);
    std::uint8_t up = get<std::uint8_t>(in);
    if (up > 1) throw FormatError("checkpoint: unknown upsample mode");
    cfg.upsample = static_cast<UpsampleMode>(up);
    cfg.ff_per_frame = get<std::uint8_t>(in) != 0;

    Model m = Model::build(cfg, 0);
    auto ps = m.params();
    std::uint64_t count = get<std::uint64_t>(in);
    if (count != ps.size())
        throw FormatError("checkpoint: parameter count mismatch (" +
                          std::to_string(count) + " vs " + std::to_string(ps.size()) + ")");
    for (Param* p : ps) {
        std::uint64_t len = get<std::uint64_t>(in);
        if (len != p->value.size())
            throw FormatError("checkpoint: shape mismatch for " + p->name);
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(len * sizeof(double)));
        if (!in) throw FormatError("checkpoint: truncated parameter data");
    }
    m.set_mode(Mode::eval);
    return m;
}

Model Model::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path);
    return load_checkpoint(f);
}

}  // namespace engae
