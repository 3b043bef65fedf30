#pragma once

// Append-only metric log. One record per line, tab separated:
//
//   <step>\t<key>\t<value>\n
//
// step is a decimal integer (environment steps so far), key has no
// whitespace, value is printed with 17 significant digits so it reads back
// to the same double. Example:
//
//   50\tepisode/return\t3.2104719917426231
//   50\tdribo/beta\t0.0001

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace dribo {

struct MetricRecord {
    std::uint64_t step = 0;
    std::string key;
    double value = 0.0;

    bool operator==(const MetricRecord&) const = default;
};

std::string format_metric(const MetricRecord& r);
MetricRecord parse_metric(const std::string& line);

class MetricsWriter {
public:
    /// Truncates unless `append` is set.
    explicit MetricsWriter(const std::filesystem::path& path, bool append = false);

    void write(std::uint64_t step, const std::string& key, double value);
    void write(std::uint64_t step, const std::vector<std::pair<std::string, double>>& values);
    void flush();

private:
    std::ofstream out_;
};

std::vector<MetricRecord> read_metrics(const std::filesystem::path& path);

/// Averages repeated keys, keeping the order of first appearance.
class MetricAccumulator {
public:
    void add(const std::vector<std::pair<std::string, double>>& values);
    void add(const std::string& key, double value);
    std::vector<std::pair<std::string, double>> means() const;
    bool empty() const noexcept { return keys_.empty(); }
    void clear();

private:
    std::vector<std::string> keys_;
    std::vector<double> sums_;
    std::vector<double> counts_;
};

}  // namespace dribo
