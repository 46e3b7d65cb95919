#include "rtsom/spectral.hpp"

#include "rtsom/errors.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rtsom {

std::size_t SvdCache::rank() const
{
    if (mu.size() == 0 || !(mu[0] > 0.0)) return 0;
    const double cut = kNullThreshold * mu[0];
    std::size_t r = 0;
    while (r < static_cast<std::size_t>(mu.size()) && mu[static_cast<Eigen::Index>(r)] >= cut) ++r;
    return r;
}

SvdCache compute_svd(const Eigen::MatrixXd& a)
{
    const Eigen::Index nd = a.rows(), n = a.cols();
    if (nd == 0 || nd > n) throw InvalidArgument("compute_svd: expected a wide matrix with N_d <= N_phase");
    if (!a.allFinite()) throw NumericalError("compute_svd: matrix has non-finite entries");

    // A^t = Q R  =>  A = R^t Q^t = Psi Lambda (Q W)^t  with  R^t = Psi Lambda W^t.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a.transpose());
    const Eigen::MatrixXd rt = qr.matrixQR().topRows(nd).triangularView<Eigen::Upper>().transpose();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(rt, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) {
        throw NumericalError("compute_svd: Jacobi SVD failed (R diagonal range " +
                             std::to_string(rt.diagonal().cwiseAbs().minCoeff()) + " .. " +
                             std::to_string(rt.diagonal().cwiseAbs().maxCoeff()) + ")");
    }

    SvdCache cache;
    cache.mu = svd.singularValues();
    cache.psi = svd.matrixU();
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(n, nd);
    padded.topRows(nd) = svd.matrixV();
    cache.phi = qr.householderQ() * padded;

    for (Eigen::Index i = 0; i < nd; ++i) {
        Eigen::Index k = 0;
        cache.psi.col(i).cwiseAbs().maxCoeff(&k);
        if (cache.psi(k, i) < 0.0) {
            cache.psi.col(i) *= -1.0;
            cache.phi.col(i) *= -1.0;
        }
    }
    cache.meta.created_unix =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    return cache;
}

Digest system_fingerprint(const Mesh& mesh, const AngularGrid& angular, Mode mode,
                          const Eigen::VectorXd& known_coefficient)
{
    Sha256 h;
    h.update(std::string_view("rtsom-system-v1"));
    h.update(static_cast<std::uint64_t>(mesh.nx)).update(static_cast<std::uint64_t>(mesh.ny));
    h.update(mesh.domain.x0).update(mesh.domain.y0).update(mesh.domain.x1).update(mesh.domain.y1);
    h.update(static_cast<std::uint64_t>(mesh.num_detectors()));
    for (auto f : mesh.detector_faces) h.update(static_cast<std::uint64_t>(f));
    h.update(static_cast<std::uint64_t>(angular.ns)).update(angular.g);
    for (std::size_t l = 0; l < angular.ns; ++l)
        h.update(angular.directions[l].x).update(angular.directions[l].y).update(angular.weights[l]);
    h.update(std::string_view(to_string(mode)));
    // Free-streaming A does not depend on any coefficient.
    if (mode == Mode::scattering)
        for (Eigen::Index m = 0; m < known_coefficient.size(); ++m) h.update(known_coefficient[m]);
    return h.finish();
}

namespace {

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

}  // namespace

std::size_t select_L(const SvdCache& cache, const std::vector<Eigen::VectorXd>& data, const LPolicy& policy)
{
    const std::size_t nd = cache.num_detectors();
    if (policy.kind == LPolicy::Kind::fixed) return std::clamp<std::size_t>(policy.fixed_value, 1, nd);

    const std::size_t r = cache.rank();
    if (r < 2) return std::max<std::size_t>(r, 1);

    if (policy.kind == LPolicy::Kind::jump) {
        std::size_t best = 0;
        double best_ratio = policy.jump_factor;
        for (std::size_t i = 1; i + 1 <= r && i <= nd - 1; ++i) {
            const double ratio = cache.mu[static_cast<Eigen::Index>(i - 1)] / cache.mu[static_cast<Eigen::Index>(i)];
            if (ratio > policy.jump_factor && ratio >= best_ratio) {
                best_ratio = ratio;
                best = i;
            }
        }
        return best ? best : r;
    }

    if (data.empty()) throw InvalidArgument("select_L: projection policy needs data");
    bool any = false;
    for (const auto& j : data) {
        if (j.size() != static_cast<Eigen::Index>(nd)) throw InvalidArgument("select_L: data length mismatch");
        any = any || !j.isZero(0.0);
    }
    if (!any) throw InvalidArgument("select_L: all data vectors are zero");

    std::vector<double> p(r);
    for (std::size_t k = 0; k < r; ++k) {
        std::vector<double> proj;
        proj.reserve(data.size());
        for (const auto& j : data) proj.push_back(std::abs(cache.psi.col(static_cast<Eigen::Index>(k)).dot(j)));
        p[k] = median(std::move(proj));
    }
    for (std::size_t k = 0; k < r; ++k) {
        const double tail = median(std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(k), p.end()));
        if (tail > policy.plateau_factor * p[k]) return std::max<std::size_t>(k, 1);
    }
    return r;
}

namespace {

constexpr char kMagic[4] = {'T', 'R', 'S', 'C'};

template <class T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <class T>
void put(std::ostream& out, T v)
{
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_doubles(std::ostream& out, const double* p, std::size_t count)
{
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < count; ++i) put(out, p[i]);
    }
}

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CacheError(CacheErrorKind::io, "cannot open cache " + path);
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

    void read(void* dst, std::size_t n)
    {
        if (remaining() < n)
            throw CacheError(CacheErrorKind::truncated, "cache " + path_ + " is truncated at byte " + std::to_string(pos_));
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    template <class T>
    T get()
    {
        T v;
        read(&v, sizeof(T));
        return to_little(v);
    }

    void get_doubles(double* dst, std::size_t count)
    {
        read(dst, count * sizeof(double));
        if constexpr (std::endian::native == std::endian::big)
            for (std::size_t i = 0; i < count; ++i) dst[i] = to_little(dst[i]);
    }

private:
    std::string path_;
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_cache(const SvdCache& cache, const std::string& path)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError(CacheErrorKind::io, "cannot write cache " + path);
        out.write(kMagic, 4);
        put<std::uint32_t>(out, cache.meta.version);
        out.write(reinterpret_cast<const char*>(cache.meta.hash.data()), 32);
        const auto nd = static_cast<std::uint64_t>(cache.mu.size());
        const auto np = static_cast<std::uint64_t>(cache.phi.rows());
        put<std::uint64_t>(out, nd);
        put<std::uint64_t>(out, np);
        put_doubles(out, cache.mu.data(), nd);
        put_doubles(out, cache.psi.data(), nd * nd);
        put_doubles(out, cache.phi.data(), np * nd);
        if (!out) throw CacheError(CacheErrorKind::io, "write failed for cache " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw CacheError(CacheErrorKind::io, "cannot move cache into place at " + path);
}

SvdCache load_cache(const std::string& path)
{
    Reader in(path);
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw CacheError(CacheErrorKind::bad_magic, path + " is not a cache file");
    SvdCache cache;
    cache.meta.version = in.get<std::uint32_t>();
    if (cache.meta.version != kCacheFormatVersion)
        throw CacheError(CacheErrorKind::version_mismatch, path + ": cache format version " +
                                                               std::to_string(cache.meta.version) + ", expected " +
                                                               std::to_string(kCacheFormatVersion));
    in.read(cache.meta.hash.data(), 32);
    const auto nd = in.get<std::uint64_t>();
    const auto np = in.get<std::uint64_t>();
    if (nd == 0 || nd > np) throw CacheError(CacheErrorKind::shape_mismatch, path + ": inconsistent dimensions");
    const std::uint64_t need = (nd + nd * nd + np * nd) * sizeof(double);
    if (in.remaining() < need)
        throw CacheError(CacheErrorKind::truncated, path + ": truncated, " + std::to_string(in.remaining()) +
                                                        " of " + std::to_string(need) + " payload bytes present");
    if (in.remaining() > need) throw CacheError(CacheErrorKind::shape_mismatch, path + ": trailing bytes after payload");
    cache.mu.resize(static_cast<Eigen::Index>(nd));
    cache.psi.resize(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(nd));
    cache.phi.resize(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(nd));
    in.get_doubles(cache.mu.data(), nd);
    in.get_doubles(cache.psi.data(), nd * nd);
    in.get_doubles(cache.phi.data(), np * nd);
    return cache;
}

SvdCache load_cache(const std::string& path, const Digest& expected)
{
    SvdCache cache = load_cache(path);
    if (cache.meta.hash != expected)
        throw CacheError(CacheErrorKind::hash_mismatch, path + ": meta hash " + to_hex(cache.meta.hash) +
                                                            " does not match expected " + to_hex(expected));
    return cache;
}

}  // namespace rtsom
