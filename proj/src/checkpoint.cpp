#include <bit>
#include <cstring>

#include "popf/errors.hpp"
#include "popf/io.hpp"
#include "popf/sdae.hpp"

namespace popf::sdae {

using Eigen::Index;

namespace {

constexpr char kMagic[8] = {'P', 'O', 'P', 'F', 'S', 'D', 'A', 'E'};

class Writer {
  public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void vec(const VectorXd& v) {
        for (Index i = 0; i < v.size(); ++i) f64(v(i));
    }
    void row_major(const MatrixXd& m) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
    void raw(const char* p, std::size_t n) { buf_.append(p, n); }
    std::string& str() { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    VectorXd vec(Index n) {
        VectorXd v(n);
        for (Index i = 0; i < n; ++i) v(i) = f64();
        return v;
    }
    MatrixXd row_major(Index rows, Index cols) {
        MatrixXd m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = f64();
        return m;
    }
    std::size_t pos() const { return pos_; }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw CorruptFile("checkpoint truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::uint64_t checksum(std::string_view bytes) { return io::fnv1a(bytes); }

}  // namespace

std::string serialize_model(const SdaeModel& model) {
    const auto widths = model.widths();
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (Index width : widths) w.u32(static_cast<std::uint32_t>(width));
    w.f64(model.corruption_level);
    for (const Bounds* b : {&model.x_bounds, &model.y_bounds}) {
        const Index n = b == &model.x_bounds ? model.input_width() : model.output_width();
        if (b->min.size() != n || b->max.size() != n)
            throw DimensionMismatch("checkpoint: normalization bounds missing or mis-sized");
        w.vec(b->min);
        w.vec(b->max);
    }
    for (const auto& l : model.layers) {
        w.row_major(l.w);
        w.vec(l.b);
    }
    w.row_major(model.top.w);
    w.vec(model.top.b);
    const std::uint64_t sum = checksum(w.str());
    w.u64(sum);
    return std::move(w.str());
}

SdaeModel deserialize_model(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw CorruptFile("not an SDAE checkpoint");
    Reader r(bytes.substr(sizeof(kMagic)));
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatVersionMismatch("checkpoint format version " + std::to_string(version) + ", expected " +
                                    std::to_string(kCheckpointVersion));
    if (bytes.size() < sizeof(kMagic) + 8 + 8) throw CorruptFile("checkpoint truncated");
    const std::string_view body = bytes.substr(0, bytes.size() - 8);
    Reader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != checksum(body)) throw CorruptFile("checkpoint checksum mismatch");

    Reader in(body.substr(sizeof(kMagic) + 4));
    const std::uint32_t n_hidden = in.u32();
    if (n_hidden > 1024) throw CorruptFile("implausible layer count");
    std::vector<Index> widths;
    for (std::uint32_t i = 0; i < n_hidden + 2; ++i) widths.push_back(static_cast<Index>(in.u32()));
    std::size_t doubles = 1 + 2 * static_cast<std::size_t>(widths.front() + widths.back());
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        doubles += static_cast<std::size_t>((widths[l] + 1) * widths[l + 1]);
    if (sizeof(kMagic) + 4 + in.pos() + 8 * doubles != body.size())
        throw CorruptFile("checkpoint size does not match its architecture header");

    SdaeModel m;
    m.corruption_level = in.f64();
    const Index nin = widths.front(), nout = widths.back();
    m.x_bounds.min = in.vec(nin);
    m.x_bounds.max = in.vec(nin);
    m.y_bounds.min = in.vec(nout);
    m.y_bounds.max = in.vec(nout);
    for (std::uint32_t l = 0; l < n_hidden; ++l) {
        DaeLayer layer;
        layer.w = in.row_major(widths[l + 1], widths[l]);
        layer.b = in.vec(widths[l + 1]);
        m.layers.push_back(std::move(layer));
    }
    m.top.w = in.row_major(nout, widths[n_hidden]);
    m.top.b = in.vec(nout);
    if (sizeof(kMagic) + 4 + in.pos() != body.size()) throw CorruptFile("checkpoint has trailing bytes");
    return m;
}

void save_model(const SdaeModel& model, const std::string& path) {
    io::write_file_atomic(path, serialize_model(model));
}

SdaeModel load_model(const std::string& path) { return deserialize_model(io::read_file(path)); }

}  // namespace popf::sdae
