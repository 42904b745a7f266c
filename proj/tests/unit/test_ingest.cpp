#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ecgbench/error.hpp"
#include "ecgbench/ingest.hpp"
#include "ecgbench/text_io.hpp"
#include "fixtures.hpp"

using namespace ecgbench;
using ecgbench::testing::TempDir;

TEST_CASE("statement map literals") {
    CHECK(parse_statement_map("{'AFIB': 100.0}") == std::vector<Statement>{{"AFIB", 100.0}});
    CHECK(parse_statement_map("{}").empty());
    CHECK(parse_statement_map("  { }  ").empty());
    CHECK(parse_statement_map("{\"NORM\": 100, 'SR':0.0 }") == std::vector<Statement>{{"NORM", 100.0}, {"SR", 0.0}});
    CHECK(parse_statement_map("{'IMI': 15.0,\n 'ASMI': 35}").size() == 2);
    CHECK_THROWS_AS(parse_statement_map("{'NORM' 100}"), DataError);
    CHECK_THROWS_AS(parse_statement_map("NORM: 100"), DataError);
    CHECK_THROWS_AS(parse_statement_map("{'NORM': abc}"), DataError);
    CHECK_THROWS_AS(parse_statement_map("{'NORM': 101}"), DataError);
    CHECK_THROWS_AS(parse_statement_map("{'NORM': 1, 'NORM': 2}"), DataError);
}

TEST_CASE("metadata parsing of the PTB-XL layout") {
    const std::string text =
        "ecg_id,patient_id,age,sex,validated_by_human,scp_codes,baseline_drift,static_noise,burst_noise,"
        "electrodes_problems,strat_fold,filename_lr,filename_hr\n"
        "1,15709.0,56.0,1,True,\"{'NORM': 100.0, 'LVOLT': 0.0, 'SR': 0.0}\",,\", I-V1,\",,,3,records100/00000/00001_lr,"
        "records500/00000/00001_hr\n"
        "2,13243.0,,0,False,{},\", V2\",,,,2,records100/00000/00002_lr,records500/00000/00002_hr\n";
    const auto recs = parse_metadata_text(text);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].record_id == "1");
    CHECK(recs[0].patient_id == "15709");
    CHECK(recs[0].age == 56.0);
    CHECK(recs[0].sex == Sex::female);
    CHECK(recs[0].validated_by_human);
    CHECK(recs[0].fold == 3);
    CHECK(recs[0].statements.size() == 3);
    CHECK(recs[0].quality.has(QualityFlag::static_noise));
    CHECK_FALSE(recs[0].quality.has(QualityFlag::baseline_drift));
    CHECK(recs[0].signal_files.at(100) == "records100/00000/00001_lr");
    CHECK(recs[1].statements.empty());
    CHECK_FALSE(recs[1].age.has_value());
    CHECK(recs[1].sex == Sex::male);
    CHECK(recs[1].quality.has(QualityFlag::baseline_drift));

    MetadataOptions hr;
    hr.sampling_rate = 500;
    CHECK(parse_metadata_text(text, hr)[0].sampling_rate == 500);
}

TEST_CASE("metadata errors") {
    CHECK_THROWS_AS(parse_metadata_text("ecg_id,patient_id,strat_fold\n1,2,3\n"), DataError);
    CHECK_THROWS_WITH_AS(parse_metadata_text("ecg_id,patient_id,strat_fold,scp_codes\n1,2,3,{}\n2,2,3,{'A' 1}\n"),
                         doctest::Contains("row 2"), DataError);
    CHECK_THROWS_WITH_AS(parse_metadata_text("ecg_id,patient_id,strat_fold,scp_codes\n1,2,3,{}\n1,2,3,{}\n"),
                         doctest::Contains("duplicate"), DataError);
    CHECK_THROWS_AS(parse_metadata_text("ecg_id,patient_id,strat_fold,scp_codes\n1,2,0,{}\n"), DataError);
}

TEST_CASE("minimal normalized layout without quality columns") {
    const auto recs = parse_metadata_text("record_id,patient_id,fold,statements\nA0001,,,\"{'AFIB': 100}\"\n");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].patient_id == "A0001");
    CHECK(recs[0].fold == 0);
    CHECK(recs[0].quality.empty());
}

TEST_CASE("metadata serialization round trip is idempotent") {
    TempDir dir;
    testing::SyntheticDatasetOptions opts;
    opts.num_records = 60;
    opts.write_signals = false;
    testing::write_synthetic_dataset(dir.path(), opts);
    const auto recs = parse_metadata(dir / "ptbxl_database.csv");
    const auto text = serialize_metadata(recs);
    const auto again = parse_metadata_text(text);
    REQUIRE(again.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(again[i].record_id == recs[i].record_id);
        CHECK(again[i].patient_id == recs[i].patient_id);
        CHECK(again[i].age == recs[i].age);
        CHECK(again[i].sex == recs[i].sex);
        CHECK(again[i].fold == recs[i].fold);
        CHECK(again[i].validated_by_human == recs[i].validated_by_human);
        CHECK(again[i].statements == recs[i].statements);
        CHECK(again[i].quality == recs[i].quality);
        CHECK(again[i].signal_files == recs[i].signal_files);
    }
    CHECK(serialize_metadata(again) == text);
}

TEST_CASE("ontology parsing") {
    const auto ont = parse_ontology_text(testing::toy_ontology_csv());
    CHECK(ont.size() == 17);
    CHECK(ont.at("NDT").is_diagnostic);
    CHECK(ont.at("NDT").is_form);
    CHECK(ont.at("LAFB").diagnostic_subclass == "LAFB/LPFB");
    CHECK_THROWS_AS(parse_ontology_text(""), DataError);
    CHECK_THROWS_AS(parse_ontology_text(",diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass\n"), DataError);
    CHECK_THROWS_AS(parse_ontology_text(",diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass\nX,1.0,,,,SUB\n"),
                    DataError);
    CHECK_THROWS_AS(parse_ontology_text(",diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass\nX,1.0,,,ZZ,SUB\n"),
                    DataError);
}

TEST_CASE("format-16 signal decoding") {
    TempDir dir;
    // Hand-decoded oracle: raw int16 values, gain 1000/mV, baseline 0.
    const std::vector<std::vector<std::int16_t>> raw{{0, 1000, -500, 32767}, {-32768, 1, 2, -1}};
    testing::write_wfdb_record(dir.path(), "rec", raw, 100, {1000, 1000}, {0, 0});
    const auto sig = read_signal(dir / "rec");
    REQUIRE(sig.samples.rows() == 2);
    REQUIRE(sig.samples.cols() == 4);
    const double expected[2][4] = {{0.0, 1.0, -0.5, 32.767}, {-32.768, 0.001, 0.002, -0.001}};
    for (int l = 0; l < 2; ++l) {
        for (int t = 0; t < 4; ++t) CHECK(sig.samples(l, t) == expected[l][t]);
    }
    CHECK(sig.sampling_rate == 100.0);
    CHECK(sig.lead_names == std::vector<std::string>{"I", "II"});

    SUBCASE("explicit byte layout") {
        // interleaved little-endian frames: (l0,t0)(l1,t0)(l0,t1)...
        const auto bytes = read_bytes(dir / "rec.dat");
        REQUIRE(bytes.size() == 16);
        CHECK(bytes[2] == 0x00);
        CHECK(bytes[3] == 0x80);  // -32768
        CHECK(bytes[4] == 0xE8);
        CHECK(bytes[5] == 0x03);  // 1000
    }
    SUBCASE("baseline and gain") {
        testing::write_wfdb_record(dir.path(), "b", {{100, 300}}, 500, {200}, {100});
        const auto s = read_signal(dir / "b.hea");
        CHECK(s.samples(0, 0) == 0.0);
        CHECK(s.samples(0, 1) == 1.0);
    }
    SUBCASE("zero payload") {
        testing::write_wfdb_record(dir.path(), "z", {std::vector<std::int16_t>(8, 0), std::vector<std::int16_t>(8, 0)}, 100,
                                   {1000, 1000}, {0, 0});
        const auto s = read_signal(dir / "z");
        for (double v : s.samples.data()) CHECK(v == 0.0);
    }
}

TEST_CASE("signal header errors") {
    CHECK_THROWS_AS(parse_signal_header("r 1 100 4\nr.dat 212 200 12 0 0 0 0 I\n"), DataError);
    CHECK_THROWS_AS(parse_signal_header("r 1 100 4\nr.dat 16 0(0)/mV 16 0 0 0 0 I\n"), DataError);
    CHECK_THROWS_AS(parse_signal_header(""), DataError);
    const auto h = parse_signal_header("# comment\n00001_lr 2 100 1000\n00001_lr.dat 16 1000.0(0)/mV 16 0 -119 1508 0 I\n"
                                       "00001_lr.dat 16 1000.0(0)/mV 16 0 -55 723 0 II\n");
    CHECK(h.num_leads == 2);
    CHECK(h.samples_per_lead == 1000);
    CHECK(h.gain == std::vector<double>{1000.0, 1000.0});

    TempDir dir;
    testing::write_wfdb_record(dir.path(), "t", {{1, 2, 3}}, 100, {1000}, {0});
    std::ofstream(dir / "t.dat", std::ios::binary | std::ios::app) << "x";
    CHECK_THROWS_WITH_AS(read_signal(dir / "t"), doctest::Contains("payload"), DataError);
}

TEST_CASE("prediction containers") {
    TempDir dir;
    Matrix s(3, 2);
    const float values[] = {0.5f, 0.25f, 0.125f, 1.0f, 0.0f, 0.3f};
    for (int i = 0; i < 6; ++i) s.data()[i] = values[i];
    const PredictionMatrix m{{"r1", "r2", "r3"}, {"A", "B"}, s};

    SUBCASE("binary round trip is exact") {
        write_predictions(dir / "p.bin", m);
        const auto back = read_predictions(dir / "p.bin");
        CHECK(back.scores == m.scores);
        CHECK(back.record_ids == m.record_ids);
        CHECK(back.class_codes == m.class_codes);
        const auto bytes = read_bytes(dir / "p.bin");
        CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "ECGBNCH1");
        CHECK(bytes.size() == 24 + 6 * 4);
        write_predictions(dir / "q.bin", back);
        CHECK(read_bytes(dir / "q.bin") == bytes);
    }
    SUBCASE("text") {
        write_file_atomic(dir / "t.csv", "record_id,A,B\nr1,0.5,0.25\n");
        const auto t = read_predictions(dir / "t.csv");
        CHECK(t.scores.row(0)[0] == 0.5);
        CHECK(t.scores.row(0)[1] == 0.25);
        Matrix fine(1, 1, 0.123456789012);
        write_predictions(dir / "f.csv", PredictionMatrix{{"x"}, {"A"}, fine});
        CHECK(std::fabs(read_predictions(dir / "f.csv").scores(0, 0) - 0.123456789012) < 1e-6);
    }
    SUBCASE("errors") {
        CHECK_THROWS_WITH_AS(write_predictions(dir / "e.bin", PredictionMatrix{{}, {"A"}, Matrix(0, 1)}),
                             doctest::Contains("empty matrix"), DataError);
        write_file_atomic(dir / "bad.bin", "NOTMAGIC0000000000000000");
        CHECK_THROWS_WITH_AS(read_predictions(dir / "bad.bin"), doctest::Contains("magic"), DataError);
        write_predictions(dir / "p.bin", m);
        auto bytes = read_file(dir / "p.bin");
        write_file_atomic(dir / "p.bin", bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_WITH_AS(read_predictions(dir / "p.bin"), doctest::Contains("size"), DataError);
        write_file_atomic(dir / "n.csv", "record_id,A\nr1,nan\n");
        CHECK_THROWS_AS(read_predictions(dir / "n.csv"), DataError);
        write_file_atomic(dir / "h.csv", "record_id,A\n");
        CHECK_THROWS_AS(read_predictions(dir / "h.csv"), DataError);
    }
}

TEST_CASE("label files carry likelihoods alongside") {
    TempDir dir;
    Matrix v(2, 2), l(2, 2);
    v(0, 0) = 1;
    l(0, 0) = 80;
    v(1, 1) = 1;
    l(1, 1) = 15;
    const LabelMatrix labels{{"a", "b"}, {"X", "Y"}, v, l};
    write_labels(dir / "labels.csv", labels);
    CHECK(std::filesystem::exists(dir / "labels.likelihood.csv"));
    const auto back = read_labels(dir / "labels.csv");
    CHECK(back.values == v);
    CHECK(back.likelihoods == l);
    write_file_atomic(dir / "bad.csv", "record_id,A\nr,0.5\n");
    CHECK_THROWS_AS(read_labels(dir / "bad.csv"), DataError);
}

TEST_CASE("load_dataset finds the PTB-XL file names") {
    TempDir dir;
    testing::SyntheticDatasetOptions opts;
    opts.num_records = 5;
    opts.num_samples = 64;
    testing::write_synthetic_dataset(dir.path(), opts);
    const auto ds = load_dataset(dir.path());
    CHECK(ds.records.size() == 5);
    CHECK(ds.ontology.size() == 17);
    const auto sig = load_record_signal(ds.records[0], ds.root);
    CHECK(sig.samples.rows() == 12);
    CHECK(sig.samples.cols() == 64);
    CHECK_THROWS_AS(load_dataset(dir / "missing"), DataError);
}
