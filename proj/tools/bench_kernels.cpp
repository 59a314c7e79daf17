#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "paramask/kernels.hpp"
#include "paramask/rng.hpp"

// Times each kernel's serial and OpenMP paths on the same inputs and checks
// the outputs stay bitwise identical, which the dispatch wrappers rely on.

namespace {

using Clock = std::chrono::steady_clock;
namespace kern = paramask::kern;

std::vector<double> random_buffer(std::size_t n, paramask::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  std::chrono::duration<double, std::milli> dt = Clock::now() - start;
  return dt.count() / reps;
}

struct Row {
  std::string name;
  double serial_ms, omp_ms;
  bool identical;
};

void print(const Row& r) {
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);
  std::cout << r.name;
  for (std::size_t i = r.name.size(); i < 28; ++i) std::cout << ' ';
  std::cout << r.serial_ms << " ms   " << r.omp_ms << " ms   speedup "
            << (r.omp_ms > 0 ? r.serial_ms / r.omp_ms : 0.0) << "   "
            << (r.identical ? "bitwise equal" : "MISMATCH") << "\n";
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t dim = 256;
  int reps = 20;
  if (argc > 1) dim = std::stoul(argv[1]);
  if (argc > 2) reps = std::stoi(argv[2]);

  paramask::Rng rng(7);
  auto a = random_buffer(dim * dim, rng);
  auto b = random_buffer(dim * dim, rng);
  std::vector<double> out_serial(dim * dim), out_omp(dim * dim);

  std::cout << "dim " << dim << ", " << reps << " reps, " << kern::max_threads()
            << " threads\n\n";

  std::vector<Row> rows;
  {
    Row r{"matmul_nn", 0, 0, false};
    r.serial_ms = time_ms(
        [&] { kern::serial::matmul_nn(a.data(), b.data(), out_serial.data(), dim, dim, dim); },
        reps);
    r.omp_ms = time_ms(
        [&] { kern::omp::matmul_nn(a.data(), b.data(), out_omp.data(), dim, dim, dim); }, reps);
    r.identical = same_bits(out_serial, out_omp);
    rows.push_back(r);
  }
  {
    Row r{"matmul_nt", 0, 0, false};
    r.serial_ms = time_ms(
        [&] { kern::serial::matmul_nt(a.data(), b.data(), out_serial.data(), dim, dim, dim); },
        reps);
    r.omp_ms = time_ms(
        [&] { kern::omp::matmul_nt(a.data(), b.data(), out_omp.data(), dim, dim, dim); }, reps);
    r.identical = same_bits(out_serial, out_omp);
    rows.push_back(r);
  }
  {
    Row r{"matmul_tn", 0, 0, false};
    r.serial_ms = time_ms(
        [&] { kern::serial::matmul_tn(a.data(), b.data(), out_serial.data(), dim, dim, dim); },
        reps);
    r.omp_ms = time_ms(
        [&] { kern::omp::matmul_tn(a.data(), b.data(), out_omp.data(), dim, dim, dim); }, reps);
    r.identical = same_bits(out_serial, out_omp);
    rows.push_back(r);
  }
  {
    Row r{"softmax_rows", 0, 0, false};
    r.serial_ms = time_ms(
        [&] { kern::serial::softmax_rows(a.data(), out_serial.data(), dim, dim); }, reps);
    r.omp_ms =
        time_ms([&] { kern::omp::softmax_rows(a.data(), out_omp.data(), dim, dim); }, reps);
    r.identical = same_bits(out_serial, out_omp);
    rows.push_back(r);
  }
  {
    Row r{"sigmoid", 0, 0, false};
    r.serial_ms = time_ms(
        [&] { kern::serial::sigmoid(a.data(), out_serial.data(), a.size()); }, reps);
    r.omp_ms = time_ms([&] { kern::omp::sigmoid(a.data(), out_omp.data(), a.size()); }, reps);
    r.identical = same_bits(out_serial, out_omp);
    rows.push_back(r);
  }

  bool all_ok = true;
  for (const auto& r : rows) {
    print(r);
    all_ok = all_ok && r.identical;
  }
  if (!all_ok) {
    std::cout << "\nserial and OpenMP paths disagree\n";
    return 1;
  }
  return 0;
}
