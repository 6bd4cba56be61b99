#include "stylemill/hash.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <vector>

#include "stylemill/error.hpp"

namespace sm {

namespace {
std::string hex(const unsigned char* d, unsigned int n) {
    static const char* digits = "0123456789abcdef";
    std::string out(static_cast<size_t>(n) * 2, '0');
    for (unsigned int i = 0; i < n; ++i) {
        out[2 * i] = digits[d[i] >> 4];
        out[2 * i + 1] = digits[d[i] & 0xF];
    }
    return out;
}
}  // namespace

std::string sha256_bytes(const void* data, size_t len) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    SM_CHECK(EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr) == 1, "sha256 failed");
    return hex(md, md_len);
}

std::string sha256_string(const std::string& s) { return sha256_bytes(s.data(), s.size()); }

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    SM_CHECK(in.good(), "sha256_file: cannot open ", path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    SM_CHECK(ctx && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1, "sha256 init failed");
    std::vector<char> buf(1 << 16);
    while (in.good()) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const std::streamsize got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(got));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    EVP_DigestFinal_ex(ctx, md, &md_len);
    EVP_MD_CTX_free(ctx);
    return hex(md, md_len);
}

}  // namespace sm
