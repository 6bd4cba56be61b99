#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace sm {

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    throw std::runtime_error(os.str());
}

}  // namespace sm

// Invariant / precondition check. Message parts are streamed together.
#define SM_CHECK(cond, ...)            \
    do {                               \
        if (!(cond)) {                 \
            ::sm::fail(__VA_ARGS__);   \
        }                              \
    } while (0)
