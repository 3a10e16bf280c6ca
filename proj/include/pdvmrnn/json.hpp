#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "pdvmrnn/errors.hpp"

// Minimal JSON tree for file manifests and reports. Output is canonical:
// object keys sorted (std::map), shortest-roundtrip numbers, no whitespace,
// so equal trees always dump to equal bytes.

namespace pdvmrnn {

struct Json {
    enum class Kind { Null, Bool, Int, UInt, Double, Str, Arr, Obj };
    Kind kind = Kind::Null;
    bool b = false;
    long long i = 0;
    unsigned long long u = 0;
    double d = 0.0;
    std::string s;
    std::vector<Json> arr;
    std::map<std::string, Json> obj;

    static Json null() { return Json(); }
    static Json boolean(bool v) { Json j; j.kind = Kind::Bool; j.b = v; return j; }
    static Json integer(long long v) { Json j; j.kind = Kind::Int; j.i = v; return j; }
    static Json uinteger(unsigned long long v) { Json j; j.kind = Kind::UInt; j.u = v; return j; }
    static Json number(double v) { Json j; j.kind = Kind::Double; j.d = v; return j; }
    static Json str(std::string v) { Json j; j.kind = Kind::Str; j.s = std::move(v); return j; }
    static Json array() { Json j; j.kind = Kind::Arr; return j; }
    static Json object() { Json j; j.kind = Kind::Obj; return j; }

    bool is_null() const { return kind == Kind::Null; }

    bool as_bool() const {
        if (kind != Kind::Bool) throw ValidationError("json: expected a boolean");
        return b;
    }

    long long as_int() const {
        if (kind == Kind::Int) return i;
        if (kind == Kind::UInt && u <= 0x7fffffffffffffffULL) return (long long)u;
        throw ValidationError("json: expected an integer");
    }

    unsigned long long as_uint() const {
        if (kind == Kind::UInt) return u;
        if (kind == Kind::Int && i >= 0) return (unsigned long long)i;
        throw ValidationError("json: expected a non-negative integer");
    }

    double as_double() const {
        if (kind == Kind::Double) return d;
        if (kind == Kind::Int) return double(i);
        if (kind == Kind::UInt) return double(u);
        throw ValidationError("json: expected a number");
    }

    const std::string& as_str() const {
        if (kind != Kind::Str) throw ValidationError("json: expected a string");
        return s;
    }

    const std::vector<Json>& as_arr() const {
        if (kind != Kind::Arr) throw ValidationError("json: expected an array");
        return arr;
    }

    bool has(const std::string& key) const {
        return kind == Kind::Obj && obj.count(key) != 0;
    }

    const Json& at(const std::string& key) const {
        if (kind != Kind::Obj) throw ValidationError("json: expected an object");
        auto it = obj.find(key);
        if (it == obj.end()) throw ValidationError("json: missing key '" + key + "'");
        return it->second;
    }

    Json& operator[](const std::string& key) {
        kind = Kind::Obj;
        return obj[key];
    }

    void push(Json v) {
        kind = Kind::Arr;
        arr.push_back(std::move(v));
    }

    std::string dump() const {
        std::string out;
        dump_to(out);
        return out;
    }

    void dump_to(std::string& out) const {
        switch (kind) {
            case Kind::Null: out += "null"; return;
            case Kind::Bool: out += b ? "true" : "false"; return;
            case Kind::Int: append_num(out, i); return;
            case Kind::UInt: append_num(out, u); return;
            case Kind::Double: append_num(out, d); return;
            case Kind::Str: append_escaped(out, s); return;
            case Kind::Arr: {
                out += '[';
                for (size_t k = 0; k < arr.size(); ++k) {
                    if (k) out += ',';
                    arr[k].dump_to(out);
                }
                out += ']';
                return;
            }
            case Kind::Obj: {
                out += '{';
                bool first = true;
                for (const auto& [key, val] : obj) {
                    if (!first) out += ',';
                    first = false;
                    append_escaped(out, key);
                    out += ':';
                    val.dump_to(out);
                }
                out += '}';
                return;
            }
        }
    }

    static Json parse(const std::string& text) {
        size_t pos = 0;
        Json out = parse_value(text, pos);
        skip_ws(text, pos);
        if (pos != text.size()) throw ValidationError("json: trailing characters after value");
        return out;
    }

private:
    template <typename N>
    static void append_num(std::string& out, N v) {
        char buf[40];
        auto r = std::to_chars(buf, buf + sizeof(buf), v);
        if (r.ec != std::errc()) throw ValidationError("json: number not representable");
        out.append(buf, r.ptr);
    }

    static void append_escaped(std::string& out, const std::string& v) {
        out += '"';
        for (unsigned char c : v) {
            switch (c) {
                case '"': out += "\\\""; break;
                case '\\': out += "\\\\"; break;
                case '\n': out += "\\n"; break;
                case '\r': out += "\\r"; break;
                case '\t': out += "\\t"; break;
                default:
                    if (c < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                        out += buf;
                    } else {
                        out += char(c);
                    }
            }
        }
        out += '"';
    }

    static void skip_ws(const std::string& t, size_t& p) {
        while (p < t.size() && (t[p] == ' ' || t[p] == '\t' || t[p] == '\n' || t[p] == '\r')) ++p;
    }

    static char peek(const std::string& t, size_t p) {
        if (p >= t.size()) throw ValidationError("json: unexpected end of input");
        return t[p];
    }

    static void expect(const std::string& t, size_t& p, const char* word) {
        for (const char* w = word; *w; ++w, ++p) {
            if (p >= t.size() || t[p] != *w) {
                throw ValidationError(std::string("json: expected '") + word + "'");
            }
        }
    }

    static Json parse_value(const std::string& t, size_t& p) {
        skip_ws(t, p);
        const char c = peek(t, p);
        if (c == '{') return parse_object(t, p);
        if (c == '[') return parse_array(t, p);
        if (c == '"') return str(parse_string(t, p));
        if (c == 't') { expect(t, p, "true"); return boolean(true); }
        if (c == 'f') { expect(t, p, "false"); return boolean(false); }
        if (c == 'n') { expect(t, p, "null"); return null(); }
        return parse_number(t, p);
    }

    static Json parse_object(const std::string& t, size_t& p) {
        Json out = object();
        ++p; // {
        skip_ws(t, p);
        if (peek(t, p) == '}') { ++p; return out; }
        while (true) {
            skip_ws(t, p);
            std::string key = parse_string(t, p);
            skip_ws(t, p);
            if (peek(t, p) != ':') throw ValidationError("json: expected ':' after object key");
            ++p;
            out.obj[std::move(key)] = parse_value(t, p);
            skip_ws(t, p);
            const char c = peek(t, p);
            ++p;
            if (c == '}') return out;
            if (c != ',') throw ValidationError("json: expected ',' or '}' in object");
        }
    }

    static Json parse_array(const std::string& t, size_t& p) {
        Json out = array();
        ++p; // [
        skip_ws(t, p);
        if (peek(t, p) == ']') { ++p; return out; }
        while (true) {
            out.arr.push_back(parse_value(t, p));
            skip_ws(t, p);
            const char c = peek(t, p);
            ++p;
            if (c == ']') return out;
            if (c != ',') throw ValidationError("json: expected ',' or ']' in array");
        }
    }

    static std::string parse_string(const std::string& t, size_t& p) {
        if (peek(t, p) != '"') throw ValidationError("json: expected a string");
        ++p;
        std::string out;
        while (true) {
            const char c = peek(t, p);
            ++p;
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            const char e = peek(t, p);
            ++p;
            switch (e) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case '/': out += '/'; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case 'n': out += '\n'; break;
                case 'r': out += '\r'; break;
                case 't': out += '\t'; break;
                case 'u': {
                    out += decode_unicode(t, p);
                    break;
                }
                default: throw ValidationError("json: bad escape in string");
            }
        }
    }

    static unsigned parse_hex4(const std::string& t, size_t& p) {
        unsigned v = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = peek(t, p);
            ++p;
            v <<= 4;
            if (c >= '0' && c <= '9') v |= unsigned(c - '0');
            else if (c >= 'a' && c <= 'f') v |= unsigned(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F') v |= unsigned(c - 'A' + 10);
            else throw ValidationError("json: bad \\u escape");
        }
        return v;
    }

    static std::string decode_unicode(const std::string& t, size_t& p) {
        unsigned cp = parse_hex4(t, p);
        if (cp >= 0xd800 && cp <= 0xdbff) {
            expect(t, p, "\\u");
            const unsigned lo = parse_hex4(t, p);
            if (lo < 0xdc00 || lo > 0xdfff) throw ValidationError("json: bad surrogate pair");
            cp = 0x10000 + ((cp - 0xd800) << 10) + (lo - 0xdc00);
        }
        std::string out;
        if (cp < 0x80) {
            out += char(cp);
        } else if (cp < 0x800) {
            out += char(0xc0 | (cp >> 6));
            out += char(0x80 | (cp & 0x3f));
        } else if (cp < 0x10000) {
            out += char(0xe0 | (cp >> 12));
            out += char(0x80 | ((cp >> 6) & 0x3f));
            out += char(0x80 | (cp & 0x3f));
        } else {
            out += char(0xf0 | (cp >> 18));
            out += char(0x80 | ((cp >> 12) & 0x3f));
            out += char(0x80 | ((cp >> 6) & 0x3f));
            out += char(0x80 | (cp & 0x3f));
        }
        return out;
    }

    static Json parse_number(const std::string& t, size_t& p) {
        const size_t start = p;
        if (p < t.size() && t[p] == '-') ++p;
        bool fractional = false;
        while (p < t.size()) {
            const char c = t[p];
            if (c >= '0' && c <= '9') { ++p; continue; }
            if (c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-') {
                fractional = fractional || c == '.' || c == 'e' || c == 'E';
                ++p;
                continue;
            }
            break;
        }
        if (p == start) throw ValidationError("json: expected a value");
        const char* first = t.data() + start;
        const char* last = t.data() + p;
        if (!fractional) {
            if (*first == '-') {
                long long v = 0;
                auto r = std::from_chars(first, last, v);
                if (r.ec == std::errc() && r.ptr == last) return integer(v);
            } else {
                unsigned long long v = 0;
                auto r = std::from_chars(first, last, v);
                if (r.ec == std::errc() && r.ptr == last) {
                    if (v <= 0x7fffffffffffffffULL) return integer((long long)v);
                    return uinteger(v);
                }
            }
        }
        double v = 0;
        auto r = std::from_chars(first, last, v);
        if (r.ec != std::errc() || r.ptr != last) throw ValidationError("json: malformed number");
        return number(v);
    }
};

} // namespace pdvmrnn
