#include "mft/torus.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace mft {

namespace {

// FFTW plan creation is not thread-safe; execution via the array-execute API
// is.  Plans are cached per grid size and created with FFTW_UNALIGNED so any
// buffer works.
struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

PlanPair& plans_for(int n) {
    static std::mutex mtx;
    static std::map<int, PlanPair> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<std::complex<double>> a(size_t(n) * n), b(size_t(n) * n);
    auto* pa = reinterpret_cast<fftw_complex*>(a.data());
    auto* pb = reinterpret_cast<fftw_complex*>(b.data());
    PlanPair p;
    p.fwd = fftw_plan_dft_2d(n, n, pa, pb, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.bwd = fftw_plan_dft_2d(n, n, pa, pb, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    return cache.emplace(n, p).first->second;
}

void fft(int n, std::vector<std::complex<double>>& buf, bool forward) {
    auto& p = plans_for(n);
    std::vector<std::complex<double>> out(buf.size());
    auto* pi = reinterpret_cast<fftw_complex*>(buf.data());
    auto* po = reinterpret_cast<fftw_complex*>(out.data());
    fftw_execute_dft(forward ? p.fwd : p.bwd, pi, po);
    buf.swap(out);
}

inline int signed_freq(int i, int n) { return i <= n / 2 ? i : i - n; }

}  // namespace

double TorusField::mean() const {
    double s = 0.0;
    for (double x : v_) s += x;
    return s / double(v_.size());
}

double TorusField::sup_norm() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
}

double TorusField::l2_norm() const {
    double s = 0.0;
    for (double x : v_) s += x * x;
    return std::sqrt(s * grid_.cell_area());
}

void TorusField::shift_mean_to_zero() {
    double m = mean();
    for (double& x : v_) x -= m;
    hat_valid_ = false;
}

const std::vector<std::complex<double>>& TorusField::spectral() const {
    if (!hat_valid_) {
        hat_.assign(v_.begin(), v_.end());
        fft(grid_.n, hat_, true);
        double scale = 1.0 / double(v_.size());
        for (auto& c : hat_) c *= scale;
        hat_valid_ = true;
    }
    return hat_;
}

double TorusField::eval(const Vec2& x) const {
    const auto& hat = spectral();
    const int n = grid_.n;
    // separable sum: collapse the second index first
    std::vector<std::complex<double>> row(n);
    for (int i = 0; i < n; ++i) {
        std::complex<double> s = 0.0;
        for (int j = 0; j < n; ++j) {
            double ph = 2.0 * M_PI * signed_freq(j, n) * x[1];
            s += hat[size_t(i) * n + j] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        row[i] = s;
    }
    std::complex<double> total = 0.0;
    for (int i = 0; i < n; ++i) {
        double ph = 2.0 * M_PI * signed_freq(i, n) * x[0];
        total += row[i] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    return total.real();
}

Vec2 TorusField::grad(const Vec2& x) const {
    const auto& hat = spectral();
    const int n = grid_.n;
    std::vector<std::complex<double>> row(n), drow(n);
    for (int i = 0; i < n; ++i) {
        std::complex<double> s = 0.0, ds = 0.0;
        for (int j = 0; j < n; ++j) {
            int k2 = signed_freq(j, n);
            if (k2 == n / 2) k2 = 0;  // drop the unpaired mode in derivatives
            double ph = 2.0 * M_PI * k2 * x[1];
            std::complex<double> e(std::cos(ph), std::sin(ph));
            std::complex<double> c = hat[size_t(i) * n + j];
            s += c * e;
            ds += c * e * std::complex<double>(0.0, 2.0 * M_PI * k2);
        }
        row[i] = s;
        drow[i] = ds;
    }
    std::complex<double> g1 = 0.0, g2 = 0.0;
    for (int i = 0; i < n; ++i) {
        int k1 = signed_freq(i, n);
        if (k1 == n / 2) k1 = 0;
        double ph = 2.0 * M_PI * k1 * x[0];
        std::complex<double> e(std::cos(ph), std::sin(ph));
        g1 += row[i] * e * std::complex<double>(0.0, 2.0 * M_PI * k1);
        g2 += drow[i] * e;
    }
    return {g1.real(), g2.real()};
}

TorusField& TorusField::operator+=(const TorusField& o) {
    if (!(grid_ == o.grid_)) throw std::invalid_argument("grid mismatch");
    for (size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    hat_valid_ = false;
    return *this;
}

TorusField& TorusField::operator-=(const TorusField& o) {
    if (!(grid_ == o.grid_)) throw std::invalid_argument("grid mismatch");
    for (size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    hat_valid_ = false;
    return *this;
}

TorusField& TorusField::operator*=(double s) {
    for (double& x : v_) x *= s;
    hat_valid_ = false;
    return *this;
}

TorusField field_from_spectral(TorusGrid grid, const std::vector<std::complex<double>>& hat) {
    const int n = grid.n;
    if (hat.size() != size_t(n) * n) throw std::invalid_argument("bad spectral size");
    std::vector<std::complex<double>> buf = hat;
    fft(n, buf, false);
    TorusField out(grid);
    auto& v = out.mutable_values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = buf[i].real();
    return out;
}

TorusField apply_laplacian(const TorusField& f) {
    const int n = f.n();
    auto hat = f.spectral();
    for (int i = 0; i < n; ++i) {
        int k1 = signed_freq(i, n);
        for (int j = 0; j < n; ++j) {
            int k2 = signed_freq(j, n);
            hat[size_t(i) * n + j] *= -4.0 * M_PI * M_PI * (double(k1) * k1 + double(k2) * k2);
        }
    }
    return field_from_spectral(f.grid(), hat);
}

std::pair<TorusField, TorusField> gradient(const TorusField& f) {
    const int n = f.n();
    auto h1 = f.spectral();
    auto h2 = h1;
    for (int i = 0; i < n; ++i) {
        int k1 = signed_freq(i, n);
        if (k1 == n / 2) k1 = 0;
        for (int j = 0; j < n; ++j) {
            int k2 = signed_freq(j, n);
            if (k2 == n / 2) k2 = 0;
            std::complex<double> c = h1[size_t(i) * n + j];
            h1[size_t(i) * n + j] = c * std::complex<double>(0.0, 2.0 * M_PI * k1);
            h2[size_t(i) * n + j] = c * std::complex<double>(0.0, 2.0 * M_PI * k2);
        }
    }
    return {field_from_spectral(f.grid(), h1), field_from_spectral(f.grid(), h2)};
}

TorusField solve_poisson(const TorusField& rhs) {
    double m = rhs.mean();
    double scale = std::max(rhs.sup_norm(), 1e-300);
    if (std::abs(m) > 1e-10 * scale)
        throw std::runtime_error("poisson right-hand side is not mean-free");
    const int n = rhs.n();
    auto hat = rhs.spectral();
    hat[0] = 0.0;
    for (int i = 0; i < n; ++i) {
        int k1 = signed_freq(i, n);
        for (int j = 0; j < n; ++j) {
            if (i == 0 && j == 0) continue;
            int k2 = signed_freq(j, n);
            hat[size_t(i) * n + j] /= -4.0 * M_PI * M_PI * (double(k1) * k1 + double(k2) * k2);
        }
    }
    TorusField u = field_from_spectral(rhs.grid(), hat);
    u.shift_mean_to_zero();
    return u;
}

double integrate(const TorusField& f) {
    double s = 0.0;
    for (double x : f.values()) s += x;
    return s * f.grid().cell_area();
}

void write_csv(const TorusField& f, std::ostream& os) {
    const int n = f.n();
    os << "n=" << n << "\n";
    char buf[40];
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", f(i, j));
            os << buf << (j + 1 < n ? "," : "\n");
        }
    }
}

TorusField read_csv(std::istream& is) {
    std::string header;
    std::getline(is, header);
    if (header.rfind("n=", 0) != 0) throw std::runtime_error("bad field csv header");
    int n = std::stoi(header.substr(2));
    TorusField f{TorusGrid(n)};
    std::string line;
    for (int i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("truncated field csv");
        std::istringstream ls(line);
        std::string cell;
        for (int j = 0; j < n; ++j) {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("short row in field csv");
            f.at(i, j) = std::stod(cell);
        }
    }
    return f;
}

// raw format assumes a little-endian host
void write_binary(const TorusField& f, std::ostream& os) {
    int64_t n = f.n();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(reinterpret_cast<const char*>(f.values().data()),
             std::streamsize(f.values().size() * sizeof(double)));
}

TorusField read_binary(std::istream& is) {
    int64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!is || n < 16) throw std::runtime_error("bad binary field header");
    TorusField f{TorusGrid(int(n))};
    is.read(reinterpret_cast<char*>(f.mutable_values().data()),
            std::streamsize(size_t(n) * n * sizeof(double)));
    if (!is) throw std::runtime_error("truncated binary field");
    return f;
}

void write_csv_file(const TorusField& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_csv(f, os);
}

TorusField read_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_csv(is);
}

void write_binary_file(const TorusField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_binary(f, os);
}

TorusField read_binary_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_binary(is);
}

SparseSpectral::SparseSpectral(const TorusField& f, double rel_tol) {
    const int n = f.n();
    const auto& hat = f.spectral();
    double top = 0.0;
    for (const auto& c : hat) top = std::max(top, std::abs(c));
    const double cut = rel_tol * top;
    mean_ = hat[0].real();
    for (int i = 0; i < n; ++i) {
        int k1 = signed_freq(i, n);
        for (int j = 0; j < n; ++j) {
            int k2 = signed_freq(j, n);
            // keep one representative per conjugate pair, double the weight
            if (k1 < 0 || (k1 == 0 && k2 <= 0)) continue;
            std::complex<double> c = hat[size_t(i) * n + j];
            if (std::abs(c) <= cut) continue;
            k1_.push_back(2.0 * M_PI * k1);
            k2_.push_back(2.0 * M_PI * k2);
            c_.push_back(2.0 * c);
        }
    }
}

double SparseSpectral::eval(const Vec2& x) const {
    double s = mean_;
    for (size_t t = 0; t < k1_.size(); ++t) {
        double ph = k1_[t] * x[0] + k2_[t] * x[1];
        s += c_[t].real() * std::cos(ph) - c_[t].imag() * std::sin(ph);
    }
    return s;
}

}  // namespace mft
