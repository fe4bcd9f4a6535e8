#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "yeti/alignment.hpp"
#include "yeti/error.hpp"
#include "yeti/frame.hpp"
#include "yeti/png.hpp"

namespace yeti {

// The wire contract, documented in the README: HTTP POST of a JSON object
// {"prompt": text, "image_png_base64": base64 PNG bytes}; the endpoint
// answers a JSON object {"completion": text}. The first base-10 integer in
// the completion is the count.

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
    static constexpr char alphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= data.size()) {
        const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    const std::size_t rest = data.size() - i;
    if (rest == 1) {
        const std::uint32_t v = data[i] << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.append("==");
    } else if (rest == 2) {
        const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw Error("invalid base64 character");
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t buffer = 0;
    int bits = 0;
    for (char c : text) {
        const int v = value_of(c);
        if (v < 0) break;
        buffer = (buffer << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xFF));
        }
    }
    return out;
}

struct RemoteEndpoint {
    std::string host;
    int port = 80;
    std::string path = "/";

    static RemoteEndpoint parse(const std::string& url) {
        const std::string prefix = "http://";
        if (url.rfind(prefix, 0) != 0)
            throw Error("remote endpoint must start with http://, got '" + url + "'");
        RemoteEndpoint ep;
        std::string rest = url.substr(prefix.size());
        const auto slash = rest.find('/');
        if (slash != std::string::npos) {
            ep.path = rest.substr(slash);
            rest = rest.substr(0, slash);
        }
        const auto colon = rest.find(':');
        if (colon != std::string::npos) {
            ep.host = rest.substr(0, colon);
            const std::string port_text = rest.substr(colon + 1);
            try {
                std::size_t used = 0;
                ep.port = std::stoi(port_text, &used);
                if (used != port_text.size() || ep.port < 1 || ep.port > 65535)
                    throw std::invalid_argument(port_text);
            } catch (const std::exception&) {
                throw Error("bad port in remote endpoint '" + url + "'");
            }
        } else {
            ep.host = rest;
        }
        if (ep.host.empty()) throw Error("remote endpoint '" + url + "' has no host");
        return ep;
    }
};

/// Extract the count from a completion text. Fails loudly when the text
/// carries no integer; a missing number must never read as zero.
inline long parse_count_completion(const std::string& completion) {
    const auto value = first_integer(completion);
    if (!value) throw Error("no integer in completion: '" + completion + "'");
    return static_cast<long>(*value);
}

namespace remote_detail {

inline void apply_timeout(httplib::Client& client, double timeout_s) {
    const auto whole = static_cast<time_t>(timeout_s);
    const auto micros = static_cast<time_t>((timeout_s - static_cast<double>(whole)) * 1e6);
    client.set_connection_timeout(whole, micros);
    client.set_read_timeout(whole, micros);
    client.set_write_timeout(whole, micros);
}

inline std::string post_for_completion(const RemoteEndpoint& endpoint, const std::string& body,
                                       double timeout_s) {
    httplib::Client client(endpoint.host, endpoint.port);
    apply_timeout(client, timeout_s);
    const httplib::Result result = client.Post(endpoint.path, body, "application/json");
    if (!result)
        throw Error("remote endpoint " + endpoint.host + ":" + std::to_string(endpoint.port) +
                    " unreachable: " + httplib::to_string(result.error()));
    if (result->status < 200 || result->status >= 300)
        throw Error("remote endpoint returned status " + std::to_string(result->status));
    return result->body;
}

}  // namespace remote_detail

/// Ask the endpoint to count the objects in one frame.
inline long query_remote_count(const CountProviderSpec& spec, const Frame& frame,
                               double timeout_s = 10.0) {
    spec.validate();
    if (spec.kind != CountProviderSpec::Kind::remote)
        throw Error("query_remote_count needs a remote provider spec");
    const RemoteEndpoint endpoint = RemoteEndpoint::parse(spec.endpoint_url);

    nlohmann::json request;
    request["prompt"] = spec.prompt;
    request["image_png_base64"] = base64_encode(encode_png_gray(frame));
    const std::string body =
        remote_detail::post_for_completion(endpoint, request.dump(), timeout_s);

    std::string completion;
    try {
        completion = nlohmann::json::parse(body).at("completion").get<std::string>();
    } catch (const std::exception& e) {
        throw Error(std::string("bad remote response: ") + e.what());
    }
    return parse_count_completion(completion);
}

/// Count every frame in the sequence, issuing requests concurrently. Results
/// land keyed by frame index, so the series is identical however the
/// requests interleave.
inline CountSeries fetch_counts(const CountProviderSpec& spec, const FrameSequence& seq,
                                unsigned threads = 4, double timeout_s = 10.0) {
    CountSeries counts;
    counts.counts.assign(seq.size(), 0);
    std::mutex failure_mutex;
    std::exception_ptr failure;
    auto run = [&](std::size_t begin, std::size_t step) {
        try {
            for (std::size_t i = begin; i < seq.size(); i += step)
                counts.counts[i] = query_remote_count(spec, seq[i], timeout_s);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    if (threads <= 1 || seq.size() <= 1) {
        run(0, 1);
    } else {
        const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(seq.size()));
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (unsigned w = 0; w < n; ++w) pool.emplace_back(run, w, n);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    counts.validate();
    return counts;
}

}  // namespace yeti
