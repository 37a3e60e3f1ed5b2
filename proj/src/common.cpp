#include "qns/common.hpp"

namespace qns {

IndexSet::IndexSet(int n) : n_(n) {
    if (n < 1 || n > 16) throw Error("IndexSet: qubit count out of range");
    masks_.push_back(0);
    for (int l = 0; l < n; ++l) masks_.push_back(1u << l);
    for (int l = 0; l < n; ++l)
        for (int m = l + 1; m < n; ++m) masks_.push_back((1u << l) | (1u << m));
    pos_.assign(1u << n, -1);
    for (int p = 0; p < size(); ++p) pos_[masks_[p]] = p;
}

int IndexSet::pos(uint32_t mask) const {
    if (mask >= pos_.size()) return -1;
    return pos_[mask];
}

std::string IndexSet::name(uint32_t mask) {
    if (mask == 0) return "0";
    std::string s;
    for (int q = 0; q < 32; ++q)
        if (mask & (1u << q)) s += std::to_string(q + 1);
    return s;
}

uint32_t IndexSet::parse(const std::string& s) {
    if (s == "0") return 0;
    uint32_t m = 0;
    for (char c : s) {
        if (c < '1' || c > '9') throw ConfigError("bad index label '" + s + "'");
        m |= 1u << (c - '1');
    }
    return m;
}

}  // namespace qns
