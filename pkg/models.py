# models.py
from datetime import datetime, timezone

from sqlalchemy.dialects.sqlite import JSON

from extensions import db


def _now():
    return datetime.now(timezone.utc)


class RunRecord(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(40), nullable=False, index=True)
    config_path = db.Column(db.String(500), nullable=True)
    config_hash = db.Column(db.String(64), nullable=False)
    seeds = db.Column(JSON, nullable=False, default=list)
    model = db.Column(db.String(20), nullable=False, default="linear")
    version = db.Column(db.String(20), nullable=False)
    out_dir = db.Column(db.String(500), nullable=False)
    status = db.Column(db.String(20), nullable=False, default="running")  # running, ok, failed
    message = db.Column(db.Text, nullable=True)
    started_at = db.Column(db.DateTime, default=_now)
    finished_at = db.Column(db.DateTime, nullable=True)
    layouts = db.relationship('LayoutRecord', backref='run', lazy=True, cascade="all, delete-orphan")

    def __repr__(self):
        return f"<RunRecord {self.id} {self.command} {self.status}>"


class LayoutRecord(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey('run_record.id'), nullable=False)
    label = db.Column(db.String(40), nullable=False)  # best, worst, optimized, random-<seed>
    seed = db.Column(db.Integer, nullable=True)
    total_power = db.Column(db.Float, nullable=False)
    positions = db.Column(JSON, nullable=False)

    def __repr__(self):
        return f"<LayoutRecord {self.label} run:{self.run_id} P:{self.total_power:.4g}>"
