#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace speclab {

// Doubles are printed with %.17g so a written value re-reads to the same bits
// and repeated runs stay byte-identical.
inline std::string csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
   public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    void header(std::initializer_list<const char*> names) {
        bool first = true;
        for (const char* n : names) {
            if (!first) out_ << ',';
            out_ << n;
            first = false;
        }
        out_ << '\n';
    }

    CsvWriter& field(const std::string& v) {
        sep();
        out_ << v;
        return *this;
    }
    CsvWriter& field(double v) { return field(csv_double(v)); }
    template <typename T, std::enable_if_t<std::is_integral_v<T>, int> = 0>
    CsvWriter& field(T v) {
        return field(std::to_string(v));
    }

    void end_row() {
        out_ << '\n';
        col_ = 0;
    }

   private:
    void sep() {
        if (col_ > 0) out_ << ',';
        ++col_;
    }
    std::ostream& out_;
    std::size_t col_ = 0;
};

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    return out;
}

}  // namespace speclab
