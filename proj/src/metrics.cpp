#include "dribo/metrics.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>

#include "dribo/errors.hpp"

namespace dribo {

std::string format_metric(const MetricRecord& r) {
    if (r.key.empty() || r.key.find_first_of(" \t\r\n") != std::string::npos)
        throw ContractError("metrics: key must be non-empty without whitespace");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    return std::to_string(r.step) + "\t" + r.key + "\t" + buf;
}

MetricRecord parse_metric(const std::string& line) {
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos)
        throw IoError("metrics: malformed record '" + line + "'");
    MetricRecord r;
    const std::string step = line.substr(0, a), value = line.substr(b + 1);
    if (step.empty() || step.find_first_not_of("0123456789") != std::string::npos)
        throw IoError("metrics: bad step in '" + line + "'");
    r.step = std::strtoull(step.c_str(), nullptr, 10);
    r.key = line.substr(a + 1, b - a - 1);
    if (r.key.empty()) throw IoError("metrics: empty key in '" + line + "'");
    char* end = nullptr;
    errno = 0;
    r.value = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size()) throw IoError("metrics: bad value in '" + line + "'");
    return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("metrics: cannot open " + path.string());
}

void MetricsWriter::write(std::uint64_t step, const std::string& key, double value) {
    out_ << format_metric({step, key, value}) << '\n';
    if (!out_) throw IoError("metrics: write failed");
}

void MetricsWriter::write(std::uint64_t step, const std::vector<std::pair<std::string, double>>& values) {
    for (const auto& [k, v] : values) write(step, k, v);
}

void MetricsWriter::flush() { out_.flush(); }

std::vector<MetricRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("metrics: cannot open " + path.string());
    std::vector<MetricRecord> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(parse_metric(line));
    return out;
}

void MetricAccumulator::add(const std::vector<std::pair<std::string, double>>& values) {
    for (const auto& [k, v] : values) add(k, v);
}

void MetricAccumulator::add(const std::string& key, double value) {
    const auto it = std::find(keys_.begin(), keys_.end(), key);
    if (it == keys_.end()) {
        keys_.push_back(key);
        sums_.push_back(value);
        counts_.push_back(1.0);
        return;
    }
    const auto i = static_cast<std::size_t>(it - keys_.begin());
    sums_[i] += value;
    counts_[i] += 1.0;
}

std::vector<std::pair<std::string, double>> MetricAccumulator::means() const {
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < keys_.size(); ++i) out.emplace_back(keys_[i], sums_[i] / counts_[i]);
    return out;
}

void MetricAccumulator::clear() {
    keys_.clear();
    sums_.clear();
    counts_.clear();
}

}  // namespace dribo
