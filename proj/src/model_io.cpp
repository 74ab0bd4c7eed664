#include "conceal/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "conceal/error.hpp"

namespace conceal::io {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'C', 'L'};
constexpr std::uint32_t kDetectorTag = 1;
constexpr std::uint32_t kGeneratorTag = 2;

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void size(std::size_t v) { u64(static_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) {
        size(s.size());
        buf_.append(s);
    }
    void raw(std::string_view s) { buf_.append(s); }
    const std::string& str() const { return buf_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::size_t size() {
        const auto v = u64();
        require(v <= data_.size(), ErrorKind::parse, "model file: implausible length field");
        return static_cast<std::size_t>(v);
    }
    std::string bytes() {
        const auto n = size();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t position() const { return pos_; }
    const std::string& data() const { return data_; }

private:
    void need(std::size_t n) const {
        require(pos_ + n <= data_.size(), ErrorKind::parse, "model file is truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string data_;
    std::size_t pos_ = 0;
};

void write_header(Writer& w, std::uint32_t tag) {
    w.raw(std::string_view(kMagic, 4));
    w.u32(kFormatVersion);
    w.u32(tag);
}

void read_header(Reader& r, std::uint32_t tag) {
    require(r.raw(4) == std::string_view(kMagic, 4), ErrorKind::parse, "not a model file (bad magic)");
    const auto version = r.u32();
    require(version == kFormatVersion, ErrorKind::parse,
            "unsupported model format version " + std::to_string(version));
    require(r.u32() == tag, ErrorKind::parse,
            tag == kDetectorTag ? "file holds a generator, not a detector"
                                : "file holds a detector, not a generator");
}

void write_spec(Writer& w, const nn::NetworkSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.kind));
    w.size(s.channels);
    w.size(s.steps);
    w.size(s.widths.size());
    for (auto v : s.widths) w.size(v);
    w.size(s.activations.size());
    for (auto a : s.activations) w.u32(static_cast<std::uint32_t>(a));
    w.f64(s.dropout);
    w.u64(s.seed);
}

nn::NetworkSpec read_spec(Reader& r) {
    nn::NetworkSpec s;
    const auto kind = r.u32();
    require(kind <= 2, ErrorKind::parse, "model file: unknown architecture");
    s.kind = static_cast<nn::Architecture>(kind);
    s.channels = r.size();
    s.steps = r.size();
    s.widths.resize(r.size());
    for (auto& v : s.widths) v = r.size();
    s.activations.resize(r.size());
    for (auto& a : s.activations) {
        const auto v = r.u32();
        require(v <= 2, ErrorKind::parse, "model file: unknown activation");
        a = static_cast<nn::Activation>(v);
    }
    s.dropout = r.f64();
    s.seed = r.u64();
    s.validate();
    return s;
}

void write_params(Writer& w, const nn::ModelParams& p) {
    w.size(p.blocks.size());
    for (const auto& b : p.blocks) {
        w.size(b.rows);
        w.size(b.cols);
        for (double v : b.data) w.f64(v);
    }
}

nn::ModelParams read_params(Reader& r, const nn::NetworkSpec& spec) {
    nn::ModelParams p;
    p.blocks.resize(r.size());
    for (auto& b : p.blocks) {
        const auto rows = r.size();
        const auto cols = r.size();
        require(rows * cols * 8 <= r.data().size(), ErrorKind::parse, "model file: implausible block shape");
        b = nn::Tensor(rows, cols);
        for (auto& v : b.data) v = r.f64();
    }
    require(p.same_shape(nn::zero_params(spec)), ErrorKind::parse,
            "model file: parameter shapes do not match the stored spec");
    return p;
}

void write_normalizer(Writer& w, const data::Normalizer& n) {
    w.size(n.channels());
    for (double v : n.min) w.f64(v);
    for (double v : n.max) w.f64(v);
}

data::Normalizer read_normalizer(Reader& r) {
    data::Normalizer n;
    const auto count = r.size();
    n.min.resize(count);
    n.max.resize(count);
    for (auto& v : n.min) v = r.f64();
    for (auto& v : n.max) v = r.f64();
    return n;
}

void finish(std::ostream& out, Writer& w) {
    w.u64(fnv1a(w.str()));
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    require(out.good(), ErrorKind::io, "failed writing model file");
}

Reader open(std::istream& in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string data = ss.str();
    require(data.size() >= 20, ErrorKind::parse, "model file is truncated");
    const std::string body = data.substr(0, data.size() - 8);
    Reader tail(data.substr(data.size() - 8));
    require(tail.u64() == fnv1a(body), ErrorKind::parse, "model file checksum mismatch");
    return Reader(body);
}

void done(const Reader& r) {
    require(r.position() == r.data().size(), ErrorKind::parse, "model file has trailing bytes");
}

template <typename Fn>
void to_file(const std::filesystem::path& path, Fn&& write) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write " + path.string());
    write(out);
}

std::ifstream from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::missing_artifact, "cannot open " + path.string());
    return in;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_detector(std::ostream& out, const detector::DetectorModel& model) {
    model.validate();
    Writer w;
    write_header(w, kDetectorTag);
    write_spec(w, model.spec);
    write_params(w, model.params);
    write_normalizer(w, model.normalizer);
    w.f64(model.threshold);
    w.size(model.window);
    finish(out, w);
}

detector::DetectorModel read_detector(std::istream& in) {
    auto r = open(in);
    read_header(r, kDetectorTag);
    detector::DetectorModel m;
    m.spec = read_spec(r);
    m.params = read_params(r, m.spec);
    m.normalizer = read_normalizer(r);
    m.threshold = r.f64();
    m.window = r.size();
    done(r);
    m.validate();
    return m;
}

void write_generator(std::ostream& out, const attacks::GeneratorModel& model) {
    model.validate();
    Writer w;
    write_header(w, kGeneratorTag);
    write_spec(w, model.spec);
    write_params(w, model.params);
    write_normalizer(w, model.normalizer);
    w.size(model.read_set.size());
    for (auto c : model.read_set) w.size(c);
    w.bytes(data::schema_to_json(model.schema).dump());
    finish(out, w);
}

attacks::GeneratorModel read_generator(std::istream& in) {
    auto r = open(in);
    read_header(r, kGeneratorTag);
    attacks::GeneratorModel g;
    g.spec = read_spec(r);
    g.params = read_params(r, g.spec);
    g.normalizer = read_normalizer(r);
    g.read_set.resize(r.size());
    for (auto& c : g.read_set) c = r.size();
    try {
        g.schema = data::schema_from_json(nlohmann::json::parse(r.bytes()));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, std::string("model file: embedded schema: ") + e.what());
    }
    done(r);
    g.validate();
    return g;
}

void save_detector(const detector::DetectorModel& model, const std::filesystem::path& path) {
    to_file(path, [&](std::ostream& out) { write_detector(out, model); });
}

detector::DetectorModel load_detector(const std::filesystem::path& path) {
    auto in = from_file(path);
    return read_detector(in);
}

void save_generator(const attacks::GeneratorModel& model, const std::filesystem::path& path) {
    to_file(path, [&](std::ostream& out) { write_generator(out, model); });
}

attacks::GeneratorModel load_generator(const std::filesystem::path& path) {
    auto in = from_file(path);
    return read_generator(in);
}

}  // namespace conceal::io
