#include "ossimm/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ossimm {

static_assert(std::endian::native == std::endian::little,
              "container payloads are written as native little-endian bytes");

namespace {

std::size_t elem_size(Container::DType t) {
    switch (t) {
        case Container::DType::F32: return 4;
        case Container::DType::F64: return 8;
        case Container::DType::C64: return 8;
        case Container::DType::C128: return 16;
        case Container::DType::U8: return 1;
    }
    throw ContainerError("unknown dtype");
}

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}
    bool done() const { return pos_ == b_.size(); }
    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    void bytes(unsigned char* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, b_.data() + pos_, n);
        pos_ += n;
    }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw ContainerError("container truncated");
    }
    const std::vector<unsigned char>& b_;
    std::size_t pos_ = 0;
};

std::uint64_t product(const std::vector<std::uint64_t>& dims) {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

}  // namespace

std::uint64_t Container::Array::count() const { return product(dims); }

void Container::put_raw(Array a) {
    if (a.name.empty() || a.name.size() > 0xffff) throw ContainerError("bad array name");
    if (has(a.name)) throw ContainerError("duplicate array name: " + a.name);
    if (a.dims.size() > 0xff) throw ContainerError("too many dimensions");
    if (a.payload.size() != a.count() * elem_size(a.dtype))
        throw ContainerError("payload size does not match dims for " + a.name);
    arrays_.push_back(std::move(a));
}

void Container::put_f64(const std::string& name, std::vector<std::uint64_t> dims, const double* data) {
    Array a{name, DType::F64, std::move(dims), {}};
    a.payload.resize(a.count() * 8);
    if (!a.payload.empty()) std::memcpy(a.payload.data(), data, a.payload.size());
    put_raw(std::move(a));
}

void Container::put_c128(const std::string& name, std::vector<std::uint64_t> dims, const cplx* data) {
    Array a{name, DType::C128, std::move(dims), {}};
    a.payload.resize(a.count() * 16);
    if (!a.payload.empty()) std::memcpy(a.payload.data(), data, a.payload.size());
    put_raw(std::move(a));
}

void Container::put_u8(const std::string& name, std::vector<std::uint64_t> dims, const std::uint8_t* data) {
    Array a{name, DType::U8, std::move(dims), {}};
    a.payload.resize(a.count());
    if (!a.payload.empty()) std::memcpy(a.payload.data(), data, a.payload.size());
    put_raw(std::move(a));
}

void Container::put_vector(const std::string& name, const std::vector<double>& v) {
    put_f64(name, {v.size()}, v.data());
}
void Container::put_vector(const std::string& name, const RVector& v) {
    put_f64(name, {static_cast<std::uint64_t>(v.size())}, v.data());
}
void Container::put_vector(const std::string& name, const CVector& v) {
    put_c128(name, {static_cast<std::uint64_t>(v.size())}, v.data());
}
void Container::put_mask(const std::string& name, const std::vector<std::uint8_t>& m) {
    put_u8(name, {m.size()}, m.data());
}
void Container::put_matrix(const std::string& name, const RMatrix& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
    put_f64(name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, r.data());
}
void Container::put_matrix(const std::string& name, const CMatrix& m) {
    const CMatrixRowMajor r = m;
    put_c128(name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, r.data());
}

void Container::put_stack(const std::string& name, const std::vector<CMatrix>& ms) {
    const std::uint64_t rows = ms.empty() ? 0 : static_cast<std::uint64_t>(ms.front().rows());
    const std::uint64_t cols = ms.empty() ? 0 : static_cast<std::uint64_t>(ms.front().cols());
    std::vector<cplx> flat;
    flat.reserve(ms.size() * rows * cols);
    for (const auto& m : ms) {
        if (static_cast<std::uint64_t>(m.rows()) != rows || static_cast<std::uint64_t>(m.cols()) != cols)
            throw ContainerError("stack members differ in shape: " + name);
        const CMatrixRowMajor r = m;
        flat.insert(flat.end(), r.data(), r.data() + r.size());
    }
    put_c128(name, {ms.size(), rows, cols}, flat.data());
}

bool Container::has(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return true;
    return false;
}

const Container::Array& Container::get(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return a;
    throw ContainerError("array not found: " + name);
}

std::vector<double> Container::f64(const std::string& name) const {
    const auto& a = get(name);
    if (a.dtype != DType::F64) throw ContainerError(name + " is not f64");
    std::vector<double> v(a.count());
    if (!v.empty()) std::memcpy(v.data(), a.payload.data(), a.payload.size());
    return v;
}

std::vector<cplx> Container::c128(const std::string& name) const {
    const auto& a = get(name);
    if (a.dtype != DType::C128) throw ContainerError(name + " is not c128");
    std::vector<cplx> v(a.count());
    if (!v.empty()) std::memcpy(static_cast<void*>(v.data()), a.payload.data(), a.payload.size());
    return v;
}

std::vector<std::uint8_t> Container::u8(const std::string& name) const {
    const auto& a = get(name);
    if (a.dtype != DType::U8) throw ContainerError(name + " is not u8");
    return {a.payload.begin(), a.payload.end()};
}

double Container::scalar(const std::string& name) const {
    const auto v = f64(name);
    if (v.size() != 1) throw ContainerError(name + " is not a scalar");
    return v[0];
}

RVector Container::rvector(const std::string& name) const {
    const auto v = f64(name);
    return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

CVector Container::cvector(const std::string& name) const {
    const auto v = c128(name);
    return Eigen::Map<const CVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

RMatrix Container::rmatrix(const std::string& name) const {
    const auto& a = get(name);
    if (a.dims.size() != 2) throw ContainerError(name + " is not a matrix");
    const auto v = f64(name);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        v.data(), static_cast<Eigen::Index>(a.dims[0]), static_cast<Eigen::Index>(a.dims[1]));
}

CMatrix Container::cmatrix(const std::string& name) const {
    const auto& a = get(name);
    if (a.dims.size() != 2) throw ContainerError(name + " is not a matrix");
    const auto v = c128(name);
    return Eigen::Map<const CMatrixRowMajor>(v.data(), static_cast<Eigen::Index>(a.dims[0]),
                                             static_cast<Eigen::Index>(a.dims[1]));
}

std::vector<CMatrix> Container::stack(const std::string& name) const {
    const auto& a = get(name);
    if (a.dims.size() != 3) throw ContainerError(name + " is not a stack");
    const auto v = c128(name);
    const auto rows = static_cast<Eigen::Index>(a.dims[1]);
    const auto cols = static_cast<Eigen::Index>(a.dims[2]);
    std::vector<CMatrix> out;
    for (std::uint64_t k = 0; k < a.dims[0]; ++k)
        out.emplace_back(Eigen::Map<const CMatrixRowMajor>(v.data() + k * rows * cols, rows, cols));
    return out;
}

std::vector<unsigned char> Container::serialize() const {
    std::vector<unsigned char> out = {'O', 'S', 'M', 'M'};
    put_le<std::uint16_t>(out, kVersion);
    for (const auto& a : arrays_) {
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
        out.insert(out.end(), a.name.begin(), a.name.end());
        out.push_back(static_cast<unsigned char>(a.dtype));
        out.push_back(static_cast<unsigned char>(a.dims.size()));
        for (auto d : a.dims) put_le<std::uint64_t>(out, d);
        out.insert(out.end(), a.payload.begin(), a.payload.end());
    }
    return out;
}

Container Container::deserialize(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 6 || std::memcmp(bytes.data(), "OSMM", 4) != 0)
        throw ContainerError("not an OSMM container");
    Reader r(bytes);
    unsigned char magic[4];
    r.bytes(magic, 4);
    const auto version = r.le<std::uint16_t>();
    if (version != kVersion) throw ContainerError("unsupported container version " + std::to_string(version));
    Container c;
    while (!r.done()) {
        Array a;
        const auto len = r.le<std::uint16_t>();
        a.name.resize(len);
        r.bytes(reinterpret_cast<unsigned char*>(a.name.data()), len);
        const auto dt = r.le<std::uint8_t>();
        if (dt < 1 || dt > 5) throw ContainerError("unknown dtype code in " + a.name);
        a.dtype = static_cast<DType>(dt);
        const auto ndim = r.le<std::uint8_t>();
        for (int i = 0; i < ndim; ++i) a.dims.push_back(r.le<std::uint64_t>());
        const std::uint64_t n = a.count() * elem_size(a.dtype);
        if (n > bytes.size()) throw ContainerError("container truncated");
        a.payload.resize(n);
        r.bytes(a.payload.data(), n);
        c.put_raw(std::move(a));
    }
    return c;
}

void Container::write(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError("write failed: " + path);
}

Container Container::read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContainerError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace ossimm
