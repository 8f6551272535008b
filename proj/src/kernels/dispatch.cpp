#include <cstdlib>
#include <cstring>

#include "attzoom/kernels.hpp"

namespace az::kernels {

bool avx2_supported() {
#if defined(__x86_64__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

#if !defined(__x86_64__)
const Kernels& avx2() { return scalar(); }
#endif

namespace {

struct Selection {
    const Kernels* k;
    const char* name;
};

Selection select() {
    const char* env = std::getenv("ATTZOOM_SIMD");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return {&scalar(), "scalar"};
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return {&avx2(), "avx2"};
    }
    if (avx2_supported()) return {&avx2(), "avx2"};
    return {&scalar(), "scalar"};
}

const Selection& selection() {
    static const Selection s = select();
    return s;
}

}  // namespace

const Kernels& active() { return *selection().k; }
const char* active_name() { return selection().name; }

}  // namespace az::kernels
