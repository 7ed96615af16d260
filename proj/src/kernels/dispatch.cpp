#include <cstdlib>
#include <string>

#include "mvjump/kernels.hpp"

namespace mvjump::kernels {

namespace {

const KernelTable& select() {
  const char* env = std::getenv("MVJUMP_SIMD");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace mvjump::kernels
