# app.py
import os

from flask import Flask
from flask.cli import FlaskGroup

from extensions import db
import models  # noqa: F401


def create_app(test_config=None):
    app = Flask(__name__)
    app.config['SQLALCHEMY_DATABASE_URI'] = 'sqlite:///owcpark.sqlite3'
    app.config['SQLALCHEMY_TRACK_MODIFICATIONS'] = False
    app.config.from_prefixed_env('OWCPARK')
    if test_config is not None:
        app.config.update(test_config)
    os.makedirs(app.instance_path, exist_ok=True)

    db.init_app(app)

    # Register Blueprints
    from simulate import simulate as simulate_blueprint
    from matrix import matrix as matrix_blueprint
    from parks import parks as parks_blueprint
    from registry import registry as registry_blueprint

    app.register_blueprint(simulate_blueprint)
    app.register_blueprint(matrix_blueprint)
    app.register_blueprint(parks_blueprint)
    app.register_blueprint(registry_blueprint)

    with app.app_context():
        db.create_all()

    return app


cli = FlaskGroup(create_app=create_app, add_default_commands=False,
                 help="OWC device and park experiments.")

if __name__ == '__main__':
    cli()
