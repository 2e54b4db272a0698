#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ossimm/types.hpp"

namespace ossimm {

/// Binary array container. Layout (little-endian):
///   "OSMM", u16 version, then per array until EOF:
///   u16 name length, UTF-8 name, u8 dtype, u8 ndim, u64 dims[ndim],
///   row-major payload.
class Container {
public:
    enum class DType : std::uint8_t { F32 = 1, F64 = 2, C64 = 3, C128 = 4, U8 = 5 };
    static constexpr std::uint16_t kVersion = 1;

    struct Array {
        std::string name;
        DType dtype = DType::F64;
        std::vector<std::uint64_t> dims;
        std::vector<unsigned char> payload;

        std::uint64_t count() const;
    };

    void put_f64(const std::string& name, std::vector<std::uint64_t> dims, const double* data);
    void put_c128(const std::string& name, std::vector<std::uint64_t> dims, const cplx* data);
    void put_u8(const std::string& name, std::vector<std::uint64_t> dims, const std::uint8_t* data);
    void put_raw(Array a);

    // Convenience wrappers; matrices are stored row-major as [rows, cols].
    void put_scalar(const std::string& name, double v) { put_f64(name, {1}, &v); }
    void put_vector(const std::string& name, const std::vector<double>& v);
    void put_vector(const std::string& name, const RVector& v);
    void put_vector(const std::string& name, const CVector& v);
    void put_mask(const std::string& name, const std::vector<std::uint8_t>& m);
    void put_matrix(const std::string& name, const RMatrix& m);
    void put_matrix(const std::string& name, const CMatrix& m);
    /// Stack of equally sized matrices as [count, rows, cols].
    void put_stack(const std::string& name, const std::vector<CMatrix>& ms);

    bool has(const std::string& name) const;
    const Array& get(const std::string& name) const;
    const std::vector<Array>& arrays() const { return arrays_; }

    std::vector<double> f64(const std::string& name) const;
    std::vector<cplx> c128(const std::string& name) const;
    std::vector<std::uint8_t> u8(const std::string& name) const;
    double scalar(const std::string& name) const;
    RVector rvector(const std::string& name) const;
    CVector cvector(const std::string& name) const;
    RMatrix rmatrix(const std::string& name) const;
    CMatrix cmatrix(const std::string& name) const;
    std::vector<CMatrix> stack(const std::string& name) const;

    void write(const std::string& path) const;
    static Container read(const std::string& path);

    std::vector<unsigned char> serialize() const;
    static Container deserialize(const std::vector<unsigned char>& bytes);

private:
    std::vector<Array> arrays_;
};

/// Thrown when a container file is missing or malformed.
class ContainerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ossimm
