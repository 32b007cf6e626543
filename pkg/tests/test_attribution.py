import numpy as np
import pytest

from pcbnet.attribution import (AttributionReport, integrated_gradients,
                                rank_tokens, report_to_html, report_to_json)
from pcbnet.data import (SyntheticGeneratorConfig, generate_synthetic,
                         segment_labels, split_records)
from pcbnet.errors import CapabilityError, ConfigError
from pcbnet.experiment import (ExperimentConfig, build_vocab_for_split,
                               featurize, train)
from pcbnet.models import build


@pytest.fixture(scope="module")
def trained_text_model():
    """Architecture 1 trained on a small zero-noise set with planted lexicon."""
    cfg = SyntheticGeneratorConfig(record_count=300, noise_scale=0.0,
                                   mean_review_length=60)
    records = generate_synthetic(cfg, seed=31)
    split = split_records(len(records), (0.8, 0.1, 0.1), 0)
    vocab = build_vocab_for_split(records, split)
    data = featurize(records, vocab)
    model = build(1, vocab=vocab, seed=0)
    train(model, data, split.train,
          ExperimentConfig(architecture=1, text_epochs=12, lr=3e-3), seed=0)
    return cfg, records, split, model


class TestClosedFormLinearCase:
    def test_linear_model_zero_baseline_is_exact(self, trained_text_model):
        # architecture 1 is linear from token embeddings to logits, so with a
        # zero baseline the attribution is x * dF/dx exactly for any steps
        _, records, split, model = trained_text_model
        record = records[split.test[0]]
        for steps in (1, 4):
            report = integrated_gradients(model, record, steps=steps,
                                          baseline="zero", target_class=2)
            assert report.completeness_gap < 1e-10
        r1 = integrated_gradients(model, record, steps=1, baseline="zero",
                                  target_class=2)
        r64 = integrated_gradients(model, record, steps=64, baseline="zero",
                                   target_class=2)
        assert np.allclose(r1.scores, r64.scores, atol=1e-12)

    def test_matches_analytic_gradient(self, trained_text_model):
        _, records, split, model = trained_text_model
        record = records[split.test[1]]
        report = integrated_gradients(model, record, steps=1, baseline="zero",
                                      target_class=1)
        # dF/dx[l] = (P @ W)[:, target] / L for the mean-pool + linear path
        grad_row = (model.encoder.projection.weight.data
                    @ model.heads["pcb_head"].layers[0].weight.data)[:, 1]
        ids = model.encoder.vocab.ids(report.tokens)
        x = model.encoder.embedding.data[ids]
        expected = (x * grad_row / len(report.tokens)).sum(axis=1)
        assert np.allclose(report.scores, expected, atol=1e-10)

    def test_constant_output_gives_zero_attributions(self, trained_text_model):
        _, records, split, model_src = trained_text_model
        model = build(1, vocab=model_src.encoder.vocab, seed=0)
        head = model.heads["pcb_head"].layers[0]
        head.weight.data[...] = 0.0  # F is constant in the input
        head.bias.data[...] = 1.0
        report = integrated_gradients(model, records[split.test[0]], steps=8)
        assert np.allclose(report.scores, 0.0, atol=1e-15)
        assert report.completeness_gap < 1e-12


class TestCompleteness:
    def test_gap_shrinks_with_steps_on_nonlinear_model(self):
        cfg = SyntheticGeneratorConfig(record_count=120, noise_scale=0.0,
                                       mean_review_length=40)
        records = generate_synthetic(cfg, seed=37)
        split = split_records(len(records), (0.8, 0.1, 0.1), 0)
        vocab = build_vocab_for_split(records, split)
        data = featurize(records, vocab)
        # architecture 12 puts relu layers between embeddings and the logit
        model = build(12, vocab=vocab, seed=0)
        train(model, data, split.train,
              ExperimentConfig(architecture=12, text_epochs=4, lr=1e-3), seed=0)
        for idx in split.test[:4]:
            record = records[idx]
            gap16 = integrated_gradients(model, record, steps=16).completeness_gap
            gap4096 = integrated_gradients(model, record, steps=4096).completeness_gap
            assert gap4096 < gap16

    def test_token_at_baseline_gets_zero_attribution(self, trained_text_model):
        _, records, split, model = trained_text_model
        record = records[split.test[0]]
        report = integrated_gradients(model, record, steps=16, baseline="pad")
        pad_row = model.encoder.embedding.data[model.encoder.vocab.pad_id]
        ids = model.encoder.vocab.ids(report.tokens)
        for pos, tid in enumerate(ids):
            if np.array_equal(model.encoder.embedding.data[tid], pad_row):
                assert report.scores[pos] == 0.0

    def test_determinism(self, trained_text_model):
        _, records, split, model = trained_text_model
        record = records[split.test[2]]
        a = integrated_gradients(model, record, steps=32)
        b = integrated_gradients(model, record, steps=32)
        assert a.scores == b.scores
        assert a.completeness_gap == b.completeness_gap


class TestContracts:
    def test_rating_only_model_rejected(self, trained_text_model):
        _, records, _, _ = trained_text_model
        with pytest.raises(CapabilityError):
            integrated_gradients(build(2), records[0])

    def test_bad_steps_and_baseline(self, trained_text_model):
        _, records, _, model = trained_text_model
        with pytest.raises(ConfigError):
            integrated_gradients(model, records[0], steps=0)
        with pytest.raises(ConfigError):
            integrated_gradients(model, records[0], baseline="noise")

    def test_gold_class_default_target(self, trained_text_model):
        _, records, split, model = trained_text_model
        record = records[split.test[0]]
        report = integrated_gradients(model, record, pcb_target="promote", steps=4)
        assert report.target_class == int(segment_labels(record).pcb_promote)


class TestRankTokens:
    def make_report(self, tokens, scores):
        return AttributionReport(
            record_id="r", tokens=tokens, scores=scores, target_class=2,
            predicted_class=2, completeness_gap=0.0, output_value=1.0,
            baseline_value=0.0, steps=4, baseline="pad", pcb_target="promote")

    def test_magnitude_ordering(self):
        report = self.make_report(["a", "b", "c"], [0.5, -0.9, 0.1])
        top = rank_tokens(report, 2)
        assert [t[0] for t in top] == [1, 0]

    def test_full_k_is_permutation(self):
        report = self.make_report(["a", "b", "c"], [0.2, -0.1, 0.3])
        top = rank_tokens(report, 3)
        assert sorted(t[1] for t in top) == ["a", "b", "c"]

    def test_ties_broken_by_earlier_position(self):
        report = self.make_report(["a", "b", "c"], [0.5, -0.5, 0.5])
        assert [t[0] for t in rank_tokens(report, 3)] == [0, 1, 2]

    def test_probability_extremes_surface_their_planted_words(self, trained_text_model):
        # the most and least promotable test records (by predicted High
        # probability) must surface their own planted lexicon words
        from pcbnet.autodiff import softmax
        from pcbnet.experiment import featurize
        cfg, records, split, model = trained_text_model
        data = featurize(records, model.encoder.vocab)
        logits = model.forward(data.batch(split.test, "promote"))["pcb_logits"]
        high_prob = softmax(logits).data[:, 2]
        for pick in (split.test[int(np.argmax(high_prob))],
                     split.test[int(np.argmin(high_prob))]):
            record = records[pick]
            labels = segment_labels(record)
            planted = set()
            for k, cls in enumerate(labels.appraisal_classes):
                if cls == 2:
                    planted |= set(cfg.appraisal_high_words[k])
                elif cls == 0:
                    planted |= set(cfg.appraisal_low_words[k])
            for e, flag in enumerate(labels.emotion_flags):
                if flag:
                    planted |= set(cfg.emotion_words[e])
            report = integrated_gradients(model, record, steps=32,
                                          target_class="predicted")
            top = {token for _, token, _ in rank_tokens(report, 10)}
            assert top & planted, record.id

    def test_planted_lexicon_words_surface_in_top10(self, trained_text_model):
        cfg, records, split, model = trained_text_model
        hits = total = 0
        for idx in split.test:
            record = records[idx]
            labels = segment_labels(record)
            planted: set[str] = set()
            for k, cls in enumerate(labels.appraisal_classes):
                if cls == 2:
                    planted |= set(cfg.appraisal_high_words[k])
                elif cls == 0:
                    planted |= set(cfg.appraisal_low_words[k])
            for e, flag in enumerate(labels.emotion_flags):
                if flag:
                    planted |= set(cfg.emotion_words[e])
            if not planted:
                continue
            report = integrated_gradients(model, record, steps=32)
            top = {token for _, token, _ in rank_tokens(report, 10)}
            total += 1
            if top & planted:
                hits += 1
        assert total > 10
        assert hits / total >= 0.8


class TestSerialization:
    def test_json_round_trip_fields(self, trained_text_model):
        import json
        _, records, split, model = trained_text_model
        report = integrated_gradients(model, records[split.test[0]], steps=4)
        obj = json.loads(report_to_json(report))
        assert obj["record_id"] == records[split.test[0]].id
        assert len(obj["tokens"]) == len(obj["scores"])
        assert "completeness_gap" in obj

    def test_html_contains_tokens_and_no_timestamp(self, trained_text_model):
        _, records, split, model = trained_text_model
        record = records[split.test[0]]
        html_a = report_to_html(integrated_gradients(model, record, steps=4))
        html_b = report_to_html(integrated_gradients(model, record, steps=4))
        assert html_a == html_b  # deterministic output
        assert record.id in html_a
        assert "<span" in html_a
