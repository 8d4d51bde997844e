#pragma once

#include <compare>
#include <cstdint>
#include <cstdlib>
#include <string>

namespace spinlat {

// Half-integer spin/projection label, stored as 2*value so arithmetic stays exact.
struct HalfInt {
    int twice = 0;

    constexpr HalfInt() = default;
    constexpr explicit HalfInt(int twice_value) : twice(twice_value) {}

    static constexpr HalfInt from_int(int n) { return HalfInt(2 * n); }
    static HalfInt from_double(double v) {
        return HalfInt(static_cast<int>(v * 2 > 0 ? v * 2 + 0.5 : v * 2 - 0.5));
    }

    constexpr bool is_integer() const { return twice % 2 == 0; }
    constexpr double value() const { return 0.5 * twice; }

    friend constexpr HalfInt operator+(HalfInt a, HalfInt b) { return HalfInt(a.twice + b.twice); }
    friend constexpr HalfInt operator-(HalfInt a, HalfInt b) { return HalfInt(a.twice - b.twice); }
    friend constexpr HalfInt operator-(HalfInt a) { return HalfInt(-a.twice); }
    friend constexpr auto operator<=>(HalfInt a, HalfInt b) = default;

    std::string str() const {
        if (is_integer()) return std::to_string(twice / 2);
        return std::to_string(twice) + "/2";
    }
};

constexpr HalfInt abs(HalfInt a) { return HalfInt(a.twice < 0 ? -a.twice : a.twice); }

// Triangle condition |a-b| <= c <= a+b with integral perimeter.
constexpr bool triangle_ok(HalfInt a, HalfInt b, HalfInt c) {
    if ((a.twice + b.twice + c.twice) % 2 != 0) return false;
    return c.twice >= std::abs(a.twice - b.twice) && c.twice <= a.twice + b.twice;
}

}  // namespace spinlat
